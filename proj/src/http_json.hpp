#pragma once

#include <string_view>

#include <json.hpp>

#include "umf/remote.hpp"

namespace umf::http {

struct Response {
    int status = 0;
    nlohmann::json body;  // null when the body is not JSON
};

/// Raw exchange; throws RemoteProtocolError only on transport failure.
Response exchange(const HttpEndpoint& endpoint, std::string_view method, std::string_view path,
                  const nlohmann::json* body);

/// Exchange that also requires status 200 and a JSON object body.
nlohmann::json get_json(const HttpEndpoint& endpoint, std::string_view path);
nlohmann::json post_json(const HttpEndpoint& endpoint, std::string_view path, const nlohmann::json& body);

}  // namespace umf::http
