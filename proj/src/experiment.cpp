#include "umf/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>
#include <string_view>
#include <tuple>

#include "umf/digest.hpp"
#include "umf/errors.hpp"
#include "umf/remote.hpp"
#include "umf/rng.hpp"
#include "umf/analysis.hpp"
#include "umf/trace.hpp"
#include "format.hpp"

namespace umf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Field access with path-qualified diagnostics

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ConfigError(path + ": " + message);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "." + key, "missing");
    return *it;
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
}

std::uint64_t as_uint(const json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        fail(path, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

bool as_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) fail(path, "expected true or false");
    return v.get<bool>();
}

std::vector<TokenId> as_tokens(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "expected an array of token ids");
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number_integer()) fail(path + "[" + std::to_string(i) + "]", "expected an integer");
        out.push_back(v[i].get<TokenId>());
    }
    return out;
}

std::string opt_string(const json& obj, const std::string& key, const std::string& fallback, const std::string& path) {
    auto it = obj.find(key);
    return it == obj.end() ? fallback : as_string(*it, path + "." + key);
}

double opt_number(const json& obj, const std::string& key, double fallback, const std::string& path) {
    auto it = obj.find(key);
    return it == obj.end() ? fallback : as_number(*it, path + "." + key);
}

void check_name(const std::string& name, const std::string& path) {
    static const std::regex ok("[A-Za-z0-9_.-]+");
    if (!std::regex_match(name, ok)) fail(path, "'" + name + "' must match [A-Za-z0-9_.-]+");
}

template <class F>
auto wrap(const std::string& path, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError& e) {
        if (std::string_view(e.what()).starts_with(path)) throw;
        fail(path, e.what());
    } catch (const Error& e) {
        fail(path, e.what());
    }
}

// ---------------------------------------------------------------------------
// Sections

Action parse_action(const json& j, const std::string& path) {
    Action a;
    a.id = as_string(require(j, "id", path), path + ".id");
    check_name(a.id, path + ".id");
    a.denoiser_id = as_string(require(j, "denoiser", path), path + ".denoiser");
    a.temperature = opt_number(j, "temperature", 0.0, path);
    if (!(a.temperature >= 0.0)) fail(path + ".temperature", "must be >= 0");
    a.remask = wrap(path + ".remask", [&] { return parse_remask_strategy(opt_string(j, "remask", "entropy", path)); });
    a.eos_suppression = wrap(path + ".eos_suppression",
                             [&] { return parse_eos_suppression(opt_string(j, "eos_suppression", "none", path)); });
    a.eos_penalty = opt_number(j, "eos_penalty", kDefaultEosPenalty, path);
    if (!(a.eos_penalty >= 0.0 && a.eos_penalty <= 1.0)) fail(path + ".eos_penalty", "must lie in [0, 1]");
    if (auto it = j.find("rng_seed"); it != j.end()) a.rng_seed = as_uint(*it, path + ".rng_seed");
    return a;
}

RewardSpec parse_reward(const json& j, const std::string& path) {
    RewardSpec r;
    r.type = as_string(require(j, "type", path), path + ".type");
    if (r.type == "exact_match") {
        const std::string mode = opt_string(j, "mode", "fraction", path);
        if (mode == "fraction") r.mode = MatchMode::fraction;
        else if (mode == "all") r.mode = MatchMode::all;
        else fail(path + ".mode", "expected fraction or all");
    } else if (r.type == "test_command") {
        r.command = as_string(require(j, "command", path), path + ".command");
        if (auto it = j.find("concurrency"); it != j.end()) r.concurrency = as_uint(*it, path + ".concurrency");
    } else if (r.type == "remote") {
        r.url = as_string(require(j, "url", path), path + ".url");
        if (auto it = j.find("retries"); it != j.end()) r.retries = static_cast<int>(as_uint(*it, path + ".retries"));
        r.timeout_s = opt_number(j, "timeout_s", 30.0, path);
    } else {
        fail(path + ".type", "expected exact_match, test_command or remote");
    }
    return r;
}

MethodSpec parse_method(const json& j, const std::string& path, const ExperimentConfig& cfg, bool arm) {
    MethodSpec m;
    const std::string name = as_string(require(j, "name", path), path + ".name");
    m.kind = wrap(path + ".name", [&] { return parse_method_kind(name); });
    m.label = opt_string(j, "label", name, path);
    if (!arm) check_name(m.label, path + ".label");
    m.schedule = cfg.schedule;
    if (auto it = j.find("schedule"); it != j.end()) {
        if (!it->is_array()) fail(path + ".schedule", "expected an array of ratios");
        std::vector<double> ratios;
        for (std::size_t i = 0; i < it->size(); ++i)
            ratios.push_back(as_number((*it)[i], path + ".schedule[" + std::to_string(i) + "]"));
        m.schedule = wrap(path + ".schedule", [&] { return RatioSchedule(ratios); });
    }
    m.use_cache = cfg.cache;
    if (auto it = j.find("cache"); it != j.end()) m.use_cache = as_bool(*it, path + ".cache");
    m.c_exp = opt_number(j, "c_exp", 1.0, path);
    if (auto it = j.find("max_iterations"); it != j.end()) m.max_iterations = as_uint(*it, path + ".max_iterations");
    if (auto it = j.find("branching_width"); it != j.end()) m.branching_width = as_uint(*it, path + ".branching_width");
    m.value_rule = wrap(path + ".value_rule", [&] { return parse_value_rule(opt_string(j, "value_rule", "mean", path)); });

    if (m.kind == MethodKind::pair) {
        const json& arms = require(j, "arms", path);
        if (!arms.is_array() || arms.size() != 2) fail(path + ".arms", "expected exactly two arms");
        for (std::size_t i = 0; i < 2; ++i) {
            const std::string ap = path + ".arms[" + std::to_string(i) + "]";
            if (arms[i].is_object() && arms[i].contains("temperatures"))
                fail(ap + ".temperatures", "pair arms cannot sweep temperatures");
            m.arms.push_back(parse_method(arms[i], ap, cfg, true));
            if (m.arms.back().kind == MethodKind::pair) fail(ap + ".name", "pair arms cannot be pairs");
        }
        return m;
    }
    const json& ids = require(j, "actions", path);
    if (!ids.is_array() || ids.empty()) fail(path + ".actions", "expected a non-empty array of action ids");
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::string ap = path + ".actions[" + std::to_string(i) + "]";
        const std::string id = as_string(ids[i], ap);
        auto it = std::find_if(cfg.actions.begin(), cfg.actions.end(), [&](const Action& a) { return a.id == id; });
        if (it == cfg.actions.end()) fail(ap, "unknown action '" + id + "'");
        m.actions.push_back(*it);
    }
    if (m.kind == MethodKind::bon && m.actions.size() != 1) fail(path + ".actions", "bon takes exactly one action");
    if (m.kind == MethodKind::dts_like && !j.contains("temperatures") &&
        std::all_of(m.actions.begin(), m.actions.end(), [](const Action& a) { return a.deterministic(); }))
        fail(path + ".actions", "dts_like needs at least one stochastic action");
    return m;
}

// One variant per temperature, labelled <label>_T<temperature>. Every action
// of the variant runs at that temperature.
std::vector<MethodSpec> sweep_temperatures(const MethodSpec& base, const json& temps, const std::string& path) {
    if (base.kind != MethodKind::bon && base.kind != MethodKind::dts_like)
        fail(path, "only bon and dts_like methods sweep temperatures");
    if (!temps.is_array() || temps.empty()) fail(path, "expected a non-empty array of temperatures");
    std::vector<MethodSpec> out;
    for (std::size_t i = 0; i < temps.size(); ++i) {
        const std::string tp = path + "[" + std::to_string(i) + "]";
        const double t = as_number(temps[i], tp);
        if (!(t >= 0.0)) fail(tp, "must be >= 0");
        MethodSpec v = base;
        const std::string suffix = "_T" + detail::format_double(t);
        v.label = base.label + suffix;
        for (Action& a : v.actions) {
            a.temperature = t;
            a.id += suffix;
        }
        if (v.kind == MethodKind::dts_like &&
            std::all_of(v.actions.begin(), v.actions.end(), [](const Action& a) { return a.deterministic(); }))
            fail(tp, "dts_like needs at least one stochastic action at this temperature");
        out.push_back(std::move(v));
    }
    return out;
}

void add_vocabulary(ExperimentConfig& cfg, VocabularyPtr v, const std::string& path) {
    if (cfg.vocabularies.count(v->name())) fail(path, "duplicate vocabulary '" + v->name() + "'");
    cfg.vocabularies[v->name()] = std::move(v);
}

HttpEndpoint endpoint_for(const std::string& url, double timeout_s) {
    return HttpEndpoint::parse(url, std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0)));
}

DenoiserPtr build_denoiser(const json& j, const std::string& path, const ExperimentConfig& cfg,
                           const ProblemSpec* problem) {
    const std::string type = as_string(require(j, "type", path), path + ".type");
    if (type == "remote") {
        const std::string url = as_string(require(j, "url", path), path + ".url");
        const std::string model = as_string(require(j, "model_id", path), path + ".model_id");
        auto vit = cfg.vocabularies.find(model);
        const auto ep = endpoint_for(url, opt_number(j, "timeout_s", 30.0, path));
        if (vit != cfg.vocabularies.end()) return std::make_shared<RemoteDenoiser>(ep, model, vit->second);
        return wrap(path, [&] { return std::make_shared<RemoteDenoiser>(ep, model); });
    }
    const std::string vname = problem ? opt_string(j, "vocabulary", problem->vocabulary, path)
                                      : as_string(require(j, "vocabulary", path), path + ".vocabulary");
    auto vit = cfg.vocabularies.find(vname);
    if (vit == cfg.vocabularies.end()) fail(path + ".vocabulary", "unknown vocabulary '" + vname + "'");
    const VocabularyPtr& vocab = vit->second;
    const KernelMode mode = opt_string(j, "kernel", "parallel", path) == "serial" ? KernelMode::serial : KernelMode::parallel;

    if (type == "planted_skill") {
        PlantedSkillConfig pc;
        if (auto it = j.find("target"); it != j.end()) pc.target = as_tokens(*it, path + ".target");
        else if (problem) pc.target = problem->target;
        if (pc.target.empty()) fail(path + ".target", "missing (and the problem declares no target)");
        const json& band = require(j, "band", path);
        if (!band.is_array() || band.size() != 2) fail(path + ".band", "expected [lo, hi]");
        pc.band_lo = as_number(band[0], path + ".band[0]");
        pc.band_hi = as_number(band[1], path + ".band[1]");
        pc.margin = opt_number(j, "margin", pc.margin, path);
        pc.noise = opt_number(j, "noise", pc.noise, path);
        if (auto it = j.find("salt"); it != j.end()) pc.salt = as_uint(*it, path + ".salt");
        return wrap(path, [&] { return std::make_shared<PlantedSkillDenoiser>(vocab, pc); });
    }
    if (type == "exact_posterior") {
        const json& sup = require(j, "support", path);
        if (!sup.is_array() || sup.empty()) fail(path + ".support", "expected a non-empty array");
        std::vector<SupportEntry> support;
        for (std::size_t i = 0; i < sup.size(); ++i) {
            const std::string sp = path + ".support[" + std::to_string(i) + "]";
            support.push_back({as_tokens(require(sup[i], "tokens", sp), sp + ".tokens"),
                               as_number(require(sup[i], "probability", sp), sp + ".probability")});
        }
        return wrap(path, [&] { return std::make_shared<ExactPosteriorDenoiser>(vocab, support, mode); });
    }
    fail(path + ".type", "expected planted_skill, exact_posterior or remote");
}

RewardPtr build_reward(const RewardSpec& r, const ExperimentConfig& cfg, const ProblemSpec& problem,
                       const std::shared_ptr<ConcurrencyLimiter>& limiter, const std::string& path) {
    if (r.type == "exact_match") {
        if (problem.target.empty()) fail("problems." + problem.id + ".target", "exact_match reward needs a target");
        return std::make_shared<ExactMatchReward>(problem.target, r.mode, problem.vocabulary);
    }
    if (cfg.codecs.empty()) fail(path, r.type + " reward needs a codec");
    if (r.type == "test_command") return std::make_shared<TestCommandReward>(r.command, cfg.codecs, limiter);
    return std::make_shared<RemoteReward>(endpoint_for(r.url, r.timeout_s), problem.id, cfg.codecs, r.retries);
}

// Limiters are shared by every problem of a run.
std::shared_ptr<ConcurrencyLimiter> limiter_for(const RewardSpec& r) {
    static std::mutex mutex;
    static std::map<std::string, std::shared_ptr<ConcurrencyLimiter>> limiters;
    if (r.type != "test_command") return nullptr;
    std::lock_guard lock(mutex);
    auto& slot = limiters[r.command + "#" + std::to_string(r.concurrency)];
    if (!slot) slot = std::make_shared<ConcurrencyLimiter>(r.concurrency);
    return slot;
}

fs::path trace_path(const fs::path& dir, const CellResult& c) {
    return dir / "traces" / c.problem / c.method / ("s" + std::to_string(c.seed) + "_b" + std::to_string(c.budget) + ".jsonl");
}

fs::path tree_path(const fs::path& dir, const CellResult& c) {
    return dir / "trees" / c.problem / c.method / ("s" + std::to_string(c.seed) + "_b" + std::to_string(c.budget) + ".json");
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingResults("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::vector<json> read_results(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw MissingResults("result directory " + dir.string() + " does not exist");
    std::ifstream in(dir / "results.jsonl");
    if (!in) throw MissingResults("no results.jsonl in " + dir.string());
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    if (out.empty()) throw MissingResults("results.jsonl in " + dir.string() + " is empty");
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir, std::optional<std::uint64_t> seed_override) {
    if (!doc.is_object()) fail("config", "expected a JSON object");
    ExperimentConfig cfg;
    cfg.raw = doc;

    if (seed_override) {
        cfg.seeds = {*seed_override};
    } else if (auto it = doc.find("seeds"); it != doc.end()) {
        if (it->is_array()) {
            for (std::size_t i = 0; i < it->size(); ++i) cfg.seeds.push_back(as_uint((*it)[i], "seeds[" + std::to_string(i) + "]"));
        } else {
            cfg.seeds.push_back(as_uint(*it, "seeds"));
        }
    }
    if (cfg.seeds.empty()) cfg.seeds.push_back(0);

    if (auto it = doc.find("schedule"); it != doc.end()) {
        if (!it->is_array()) fail("schedule", "expected an array of ratios");
        std::vector<double> ratios;
        for (std::size_t i = 0; i < it->size(); ++i) ratios.push_back(as_number((*it)[i], "schedule[" + std::to_string(i) + "]"));
        cfg.schedule = wrap("schedule", [&] { return RatioSchedule(ratios); });
    }
    if (auto it = doc.find("cache"); it != doc.end()) cfg.cache = as_bool(*it, "cache");

    if (auto it = doc.find("vocabularies"); it != doc.end()) {
        if (!it->is_array()) fail("vocabularies", "expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string p = "vocabularies[" + std::to_string(i) + "]";
            const json& v = (*it)[i];
            auto vocab = wrap(p, [&] {
                return std::make_shared<const Vocabulary>(as_string(require(v, "name", p), p + ".name"),
                                                          as_uint(require(v, "size", p), p + ".size"),
                                                          static_cast<TokenId>(as_uint(require(v, "eos", p), p + ".eos")),
                                                          static_cast<TokenId>(as_uint(require(v, "pad", p), p + ".pad")));
            });
            add_vocabulary(cfg, vocab, p);
        }
    }
    if (auto it = doc.find("codecs"); it != doc.end()) {
        if (!it->is_array()) fail("codecs", "expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string p = "codecs[" + std::to_string(i) + "]";
            const json& c = (*it)[i];
            std::shared_ptr<ToyCodec> codec;
            if (c.is_string()) {
                fs::path file = as_string(c, p);
                if (file.is_relative()) file = base_dir / file;
                codec = wrap(p, [&] { return ToyCodec::from_file(file); });
            } else if (c.contains("remote")) {
                continue;  // resolved after denoisers
            } else {
                codec = wrap(p, [&] { return ToyCodec::from_json_text(c.dump()); });
            }
            add_vocabulary(cfg, codec->vocabulary(), p);
            cfg.codecs.add(codec);
        }
    }

    if (auto it = doc.find("denoisers"); it != doc.end()) {
        if (!it->is_array()) fail("denoisers", "expected an array");
        for (const auto& d : *it) cfg.denoisers.push_back(d);
    }
    // Remote denoisers contribute the vocabulary (and a codec) of their model.
    for (std::size_t i = 0; i < cfg.denoisers.size(); ++i) {
        const json& d = cfg.denoisers[i];
        const std::string p = "denoisers[" + std::to_string(i) + "]";
        if (opt_string(d, "type", "", p) != "remote") continue;
        const std::string url = as_string(require(d, "url", p), p + ".url");
        const std::string model = as_string(require(d, "model_id", p), p + ".model_id");
        if (cfg.vocabularies.count(model)) continue;
        const auto ep = endpoint_for(url, opt_number(d, "timeout_s", 30.0, p));
        const auto models = wrap(p, [&] { return list_remote_models(ep); });
        auto m = std::find_if(models.begin(), models.end(), [&](const RemoteModelInfo& r) { return r.id == model; });
        if (m == models.end()) fail(p + ".model_id", "server does not list model '" + model + "'");
        auto vocab = wrap(p, [&] { return remote_vocabulary(*m); });
        add_vocabulary(cfg, vocab, p);
        if (!cfg.codecs.find(model)) cfg.codecs.add(std::make_shared<RemoteCodec>(ep, model, vocab));
    }

    const json& problems = require(doc, "problems", "config");
    if (!problems.is_array() || problems.empty()) fail("problems", "expected a non-empty array");
    std::set<std::string> problem_ids;
    for (std::size_t i = 0; i < problems.size(); ++i) {
        const std::string p = "problems[" + std::to_string(i) + "]";
        const json& pj = problems[i];
        ProblemSpec ps;
        ps.id = as_string(require(pj, "id", p), p + ".id");
        check_name(ps.id, p + ".id");
        if (!problem_ids.insert(ps.id).second) fail(p + ".id", "duplicate problem id '" + ps.id + "'");
        if (auto it = pj.find("vocabulary"); it != pj.end()) {
            ps.vocabulary = as_string(*it, p + ".vocabulary");
        } else if (cfg.vocabularies.size() == 1) {
            ps.vocabulary = cfg.vocabularies.begin()->first;
        } else {
            fail(p + ".vocabulary", "required when the config declares several vocabularies");
        }
        auto vit = cfg.vocabularies.find(ps.vocabulary);
        if (vit == cfg.vocabularies.end()) fail(p + ".vocabulary", "unknown vocabulary '" + ps.vocabulary + "'");
        if (auto it = pj.find("prompt"); it != pj.end()) {
            ps.prompt = as_tokens(*it, p + ".prompt");
        } else if (auto t = pj.find("prompt_text"); t != pj.end()) {
            const Codec* codec = cfg.codecs.find(ps.vocabulary);
            if (!codec) fail(p + ".prompt_text", "no codec for vocabulary '" + ps.vocabulary + "'");
            ps.prompt = wrap(p + ".prompt_text", [&] { return codec->encode(as_string(*t, p + ".prompt_text")); });
        }
        for (std::size_t k = 0; k < ps.prompt.size(); ++k)
            if (!vit->second->contains(ps.prompt[k]))
                fail(p + ".prompt[" + std::to_string(k) + "]", "token outside the vocabulary");
        if (auto it = pj.find("target"); it != pj.end()) ps.target = as_tokens(*it, p + ".target");
        if (auto it = pj.find("gen_length"); it != pj.end()) ps.gen_length = as_uint(*it, p + ".gen_length");
        else ps.gen_length = ps.target.size();
        if (ps.gen_length == 0) fail(p + ".gen_length", "must be at least 1");
        if (!ps.target.empty() && ps.target.size() != ps.gen_length)
            fail(p + ".target", "length differs from gen_length");
        for (std::size_t k = 0; k < ps.target.size(); ++k)
            if (!vit->second->contains(ps.target[k]))
                fail(p + ".target[" + std::to_string(k) + "]", "token outside the vocabulary");
        if (auto it = pj.find("denoisers"); it != pj.end())
            for (const auto& d : *it) ps.denoisers.push_back(d);
        wrap(p + ".gen_length", [&] { return cfg.schedule.masked_counts(ps.gen_length); });
        cfg.problems.push_back(std::move(ps));
    }

    const json& actions = require(doc, "actions", "config");
    if (!actions.is_array() || actions.empty()) fail("actions", "expected a non-empty array");
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const std::string p = "actions[" + std::to_string(i) + "]";
        Action a = parse_action(actions[i], p);
        for (const Action& other : cfg.actions)
            if (other.id == a.id) fail(p + ".id", "duplicate action id '" + a.id + "'");
        cfg.actions.push_back(std::move(a));
    }

    const json& methods = require(doc, "methods", "config");
    if (!methods.is_array() || methods.empty()) fail("methods", "expected a non-empty array");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        const std::string p = "methods[" + std::to_string(i) + "]";
        const MethodSpec base = parse_method(methods[i], p, cfg, false);
        std::vector<MethodSpec> variants;
        if (auto it = methods[i].find("temperatures"); it != methods[i].end()) {
            variants = sweep_temperatures(base, *it, p + ".temperatures");
            for (const auto& v : variants) cfg.sweep_groups[v.label] = base.label;
        } else {
            variants.push_back(base);
        }
        for (auto& v : variants) {
            if (!labels.insert(v.label).second) fail(p + ".label", "duplicate method label '" + v.label + "'");
            cfg.methods.push_back(std::move(v));
        }
    }

    const json& budgets = require(doc, "budgets", "config");
    if (!budgets.is_array() || budgets.empty()) fail("budgets", "expected a non-empty array");
    for (std::size_t i = 0; i < budgets.size(); ++i) cfg.budgets.push_back(as_uint(budgets[i], "budgets[" + std::to_string(i) + "]"));

    cfg.reward = parse_reward(require(doc, "reward", "config"), "reward");
    if (auto it = doc.find("held_out"); it != doc.end()) cfg.held_out = parse_reward(*it, "held_out");
    if (auto it = doc.find("analysis"); it != doc.end()) cfg.analysis = *it;

    // Every action's denoiser must resolve for every problem.
    for (const auto& ps : cfg.problems) {
        std::set<std::string> ids;
        for (const auto& d : cfg.denoisers) ids.insert(opt_string(d, "id", "", "denoisers"));
        for (const auto& d : ps.denoisers) ids.insert(opt_string(d, "id", "", "problems." + ps.id + ".denoisers"));
        for (std::size_t i = 0; i < cfg.actions.size(); ++i)
            if (!ids.count(cfg.actions[i].denoiser_id))
                fail("actions[" + std::to_string(i) + "].denoiser",
                     "unknown denoiser '" + cfg.actions[i].denoiser_id + "' for problem '" + ps.id + "'");
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(doc, path.parent_path(), seed_override);
}

ProblemContext build_problem(const ExperimentConfig& cfg, const ProblemSpec& problem) {
    const VocabularyPtr& vocab = cfg.vocabularies.at(problem.vocabulary);
    ProblemContext ctx{MaskedState::fully_masked(vocab, problem.prompt, problem.gen_length), {}, {}, nullptr, nullptr};
    std::map<std::string, std::pair<const json*, std::string>> specs;
    for (std::size_t i = 0; i < cfg.denoisers.size(); ++i)
        specs[as_string(require(cfg.denoisers[i], "id", "denoisers"), "denoisers.id")] = {&cfg.denoisers[i], "denoisers[" + std::to_string(i) + "]"};
    for (std::size_t i = 0; i < problem.denoisers.size(); ++i)
        specs[as_string(require(problem.denoisers[i], "id", "problems." + problem.id + ".denoisers"), "id")] = {
            &problem.denoisers[i], "problems." + problem.id + ".denoisers[" + std::to_string(i) + "]"};
    for (const auto& [id, spec] : specs) {
        DenoiserPtr d = build_denoiser(*spec.first, spec.second, cfg, &problem);
        ctx.by_id[id] = d;
        ctx.denoisers.add(id, d);
    }
    ctx.reward = build_reward(cfg.reward, cfg, problem, limiter_for(cfg.reward), "reward");
    if (cfg.held_out) ctx.held_out = build_reward(*cfg.held_out, cfg, problem, limiter_for(*cfg.held_out), "held_out");
    return ctx;
}

const std::vector<std::string>& summary_columns() {
    static const std::vector<std::string> columns{"problem",       "seed",           "method",     "budget",
                                                  "best_reward",   "nfe_consumed",   "cache_hit_rate",
                                                  "iterations",    "held_out_reward", "status"};
    return columns;
}

std::uint64_t cell_seed(std::uint64_t seed, const std::string& problem_id) {
    return mix_seed(seed, hash_name(problem_id));
}

namespace {

void write_outputs(const fs::path& out, const ExperimentConfig& cfg, const std::vector<CellResult>& cells) {
    {
        std::ofstream f(out / "summary.csv");
        for (std::size_t i = 0; i < summary_columns().size(); ++i) f << (i ? "," : "") << summary_columns()[i];
        f << '\n';
        for (const auto& c : cells) {
            f << c.problem << ',' << c.seed << ',' << c.method << ',' << c.budget << ','
              << detail::format_double(c.result.best_reward()) << ',' << c.result.nfe_consumed << ','
              << detail::format_double(c.result.cache_hit_rate()) << ',' << c.result.iterations << ','
              << (c.held_out_reward ? detail::format_double(*c.held_out_reward) : "") << ',' << c.status << '\n';
        }
    }
    {
        std::ofstream f(out / "timing.csv");
        f << "problem,seed,method,budget,wall_time_s\n";
        for (const auto& c : cells)
            f << c.problem << ',' << c.seed << ',' << c.method << ',' << c.budget << ',' << detail::format_double(c.wall_time_s) << '\n';
    }
    for (const auto& m : cfg.methods) {
        std::ofstream f(out / ("scaling_" + m.label + ".csv"));
        f << "problem,seed,budget,best_reward,nfe_consumed,status\n";
        for (const auto& c : cells)
            if (c.method == m.label)
                f << c.problem << ',' << c.seed << ',' << c.budget << ',' << detail::format_double(c.result.best_reward()) << ','
                  << c.result.nfe_consumed << ',' << c.status << '\n';
    }
    if (!cfg.sweep_groups.empty()) {
        // Best temperature per (problem, seed, group, budget); ties keep the earlier variant.
        using Key = std::tuple<std::string, std::uint64_t, std::string, std::uint64_t>;
        std::map<Key, const CellResult*> best;
        std::vector<Key> order;
        for (const auto& c : cells) {
            auto g = cfg.sweep_groups.find(c.method);
            if (g == cfg.sweep_groups.end() || c.status != "ok") continue;
            const Key key{c.problem, c.seed, g->second, c.budget};
            auto [it, inserted] = best.emplace(key, &c);
            if (inserted) order.push_back(key);
            else if (c.result.best_reward() > it->second->result.best_reward()) it->second = &c;
        }
        std::ofstream f(out / "best_of_sweep.csv");
        f << "problem,seed,method,budget,best_reward,best_variant\n";
        for (const auto& key : order) {
            const CellResult& c = *best.at(key);
            f << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << std::get<3>(key) << ','
              << detail::format_double(c.result.best_reward()) << ',' << c.method << '\n';
        }
    }
    std::ofstream f(out / "results.jsonl");
    for (const auto& c : cells) {
        json j{{"problem", c.problem},
               {"seed", c.seed},
               {"method", c.method},
               {"budget", c.budget},
               {"status", c.status},
               {"best_reward", c.result.best_reward()},
               {"nfe_consumed", c.result.nfe_consumed},
               {"rollouts", c.result.rollouts},
               {"cache_hits", c.result.cache_hits},
               {"cache_hit_rate", c.result.cache_hit_rate()},
               {"iterations", c.result.iterations},
               {"flags", c.result.flags},
               {"trace", fs::relative(trace_path(out, c), out).generic_string()}};
        if (c.held_out_reward) j["held_out_reward"] = *c.held_out_reward;
        if (!c.error.empty()) j["error"] = c.error;
        if (c.result.best) {
            const MaskedState& t = *c.result.best->terminal;
            j["best_tokens"] = std::vector<TokenId>(t.gen().begin(), t.gen().end());
            j["best_vocabulary"] = t.vocabulary().name();
            j["best_digest"] = state_digest(t).hex();
            if (const Codec* codec = cfg.codecs.find(t.vocabulary().name())) {
                try {
                    j["best_text"] = decode_generation(t, *codec);
                } catch (const Error&) {
                }
            }
        }
        if (c.result.tree) j["tree"] = fs::relative(tree_path(out, c), out).generic_string();
        f << j.dump() << '\n';
    }
}

void run_analysis(const fs::path& out, const ExperimentConfig& cfg) {
    if (cfg.analysis.is_null()) return;
    fs::create_directories(out / "analysis");
    auto problem_for = [&](const json& j, const std::string& path) -> const ProblemSpec& {
        const std::string id = opt_string(j, "problem", cfg.problems.front().id, path);
        for (const auto& p : cfg.problems)
            if (p.id == id) return p;
        fail(path + ".problem", "unknown problem '" + id + "'");
    };
    if (auto it = cfg.analysis.find("kl_profile"); it != cfg.analysis.end()) {
        const std::string p = "analysis.kl_profile";
        const ProblemSpec& ps = problem_for(*it, p);
        ProblemContext ctx = build_problem(cfg, ps);
        const std::string truth_id = as_string(require(*it, "truth", p), p + ".truth");
        auto truth = std::dynamic_pointer_cast<const ExactPosteriorDenoiser>(ctx.by_id.count(truth_id) ? ctx.by_id.at(truth_id) : nullptr);
        if (!truth) fail(p + ".truth", "'" + truth_id + "' is not an exact_posterior denoiser");
        std::vector<std::pair<std::string, DenoiserPtr>> candidates;
        for (const auto& c : require(*it, "candidates", p)) {
            const std::string id = as_string(c, p + ".candidates");
            if (!ctx.by_id.count(id)) fail(p + ".candidates", "unknown denoiser '" + id + "'");
            candidates.emplace_back(id, ctx.by_id.at(id));
        }
        KlProfileConfig kc;
        kc.ratios = it->value("ratios", cfg.schedule.ratios());
        kc.samples_per_ratio = it->value("samples", std::size_t{32});
        kc.temperature = opt_number(*it, "temperature", 1.0, p);
        kc.seed = cfg.seeds.front();
        const auto profile = wrap(p, [&] { return measure_kl_profile(*truth, candidates, ps.prompt, kc); });
        write_kl_profile_csv(out / "analysis" / "kl_profile.csv", profile);
        const auto bound = switching_bound_check(profile);
        std::ofstream(out / "analysis" / "switching_bound.json")
            << json{{"lhs", bound.lhs}, {"rhs", bound.rhs}, {"holds", bound.holds}, {"policy", profile.switching_policy()}}.dump(2)
            << '\n';
    }
    if (auto it = cfg.analysis.find("variance"); it != cfg.analysis.end()) {
        const std::string p = "analysis.variance";
        const ProblemSpec& ps = problem_for(*it, p);
        ProblemContext ctx = build_problem(cfg, ps);
        const std::string action_id = as_string(require(*it, "action", p), p + ".action");
        auto a = std::find_if(cfg.actions.begin(), cfg.actions.end(), [&](const Action& x) { return x.id == action_id; });
        if (a == cfg.actions.end()) fail(p + ".action", "unknown action '" + action_id + "'");
        VarianceConfig vc;
        vc.m_values = it->value("m", vc.m_values);
        vc.trials = it->value("trials", vc.trials);
        vc.seed = cfg.seeds.front();
        Environment env{ctx.denoisers, *ctx.reward, &cfg.codecs};
        const auto rows = wrap(p, [&] { return rollout_variance_study(ctx.initial, *a, env, vc); });
        write_variance_csv(out / "analysis" / "variance.csv", rows);
    }
}

}  // namespace

RunSummary run_experiment(const fs::path& config_path, const fs::path& out, int workers,
                          std::optional<std::uint64_t> seed_override) {
    const ExperimentConfig cfg = load_config(config_path, seed_override);
    fs::create_directories(out);
    {
        std::ofstream(out / "config.json") << cfg.raw.dump(2) << '\n';
        std::ofstream(out / "meta.json") << json{{"digest_algorithm", kDigestAlgorithm},
                                                 {"seeds", cfg.seeds},
                                                 {"summary_columns", summary_columns()}}
                                                .dump(2)
                                         << '\n';
    }

    // Problems are materialised once; denoisers and rewards are shared read-only by cells.
    std::vector<std::unique_ptr<ProblemContext>> contexts;
    for (const auto& ps : cfg.problems) contexts.push_back(std::make_unique<ProblemContext>(build_problem(cfg, ps)));

    struct Job {
        std::size_t problem;
        std::uint64_t seed;
        std::size_t method;
        std::uint64_t budget;
    };
    std::vector<Job> jobs;
    for (std::size_t p = 0; p < cfg.problems.size(); ++p)
        for (std::uint64_t s : cfg.seeds)
            for (std::size_t m = 0; m < cfg.methods.size(); ++m)
                for (std::uint64_t b : cfg.budgets) jobs.push_back({p, s, m, b});

    RunSummary summary;
    summary.cells = jobs.size();
    summary.results.resize(jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        CellResult& c = summary.results[i];
        c.problem = cfg.problems[jobs[i].problem].id;
        c.seed = jobs[i].seed;
        c.method = cfg.methods[jobs[i].method].label;
        c.budget = jobs[i].budget;
        fs::create_directories(trace_path(out, c).parent_path());
        if (cfg.methods[jobs[i].method].kind == MethodKind::umf) fs::create_directories(tree_path(out, c).parent_path());
    }

    const int threads = std::max(1, workers);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(jobs.size()); ++k) {
        const Job& job = jobs[static_cast<std::size_t>(k)];
        CellResult& c = summary.results[static_cast<std::size_t>(k)];
        const ProblemContext& ctx = *contexts[job.problem];
        const auto start = std::chrono::steady_clock::now();
        try {
            Environment env{ctx.denoisers, *ctx.reward, &cfg.codecs};
            c.result = run_method(cfg.methods[job.method], ctx.initial, env, job.budget,
                                  cell_seed(job.seed, c.problem));
            if (ctx.held_out && c.result.best) c.held_out_reward = ctx.held_out->score(*c.result.best->terminal).reward;
        } catch (const std::exception& e) {
            c.status = "failed";
            c.error = e.what();
        }
        c.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        try {
            write_trace(trace_path(out, c), c.result.trace);
            if (c.result.tree)
                std::ofstream(tree_path(out, c))
                    << tree_to_json(*c.result.tree, c.result.best ? std::optional<std::size_t>(c.result.best->node_id)
                                                                  : std::nullopt)
                           .dump()
                    << '\n';
        } catch (const std::exception& e) {
            c.status = "failed";
            c.error += std::string(c.error.empty() ? "" : "; ") + e.what();
        }
    }
    for (const auto& c : summary.results) summary.failed += c.status != "ok";
    write_outputs(out, cfg, summary.results);
    run_analysis(out, cfg);
    return summary;
}

std::string report(const fs::path& dir) {
    const auto results = read_results(dir);
    std::ostringstream out;
    std::map<std::string, std::vector<const json*>> by_method;
    for (const auto& r : results) by_method[r.at("method").get<std::string>()].push_back(&r);

    for (const auto& r : results) {
        if (!r.contains("tree")) continue;
        const json tree = read_json_file(dir / r.at("tree").get<std::string>());
        out << "== tree " << r.at("problem").get<std::string>() << " / " << r.at("method").get<std::string>()
            << " / seed " << r.at("seed") << " / budget " << r.at("budget") << " ==\n";
        out << render_tree(tree) << '\n';
    }
    for (const auto& [method, rows] : by_method) {
        out << "== best-so-far vs NFE: " << method << " ==\n";
        for (const json* r : rows) {
            out << "-- " << r->at("problem").get<std::string>() << " seed " << r->at("seed") << " budget "
                << r->at("budget") << " (" << r->at("status").get<std::string>() << ")\n";
            out << "   nfe_consumed  best_so_far\n";
            for (const auto& rec : read_trace(dir / r->at("trace").get<std::string>())) {
                std::ostringstream line;
                line << "   " << std::setw(12) << rec.nfe_consumed << "  " << std::fixed << std::setprecision(6)
                     << rec.best_so_far << '\n';
                out << line.str();
            }
        }
        out << '\n';
    }
    const std::string text = out.str();
    std::ofstream(dir / "report.txt") << text;
    return text;
}

std::vector<std::string> verify_results(const fs::path& dir) {
    const auto results = read_results(dir);
    std::vector<std::string> problems;
    {
        std::ifstream f(dir / "summary.csv");
        std::string header;
        std::getline(f, header);
        std::string expected;
        for (std::size_t i = 0; i < summary_columns().size(); ++i) expected += (i ? "," : "") + summary_columns()[i];
        if (header != expected) problems.push_back("summary.csv: unexpected header '" + header + "'");
    }
    for (const auto& r : results) {
        const std::string where = r.at("trace").get<std::string>() + ": ";
        const auto trace = read_trace(dir / r.at("trace").get<std::string>());
        for (const auto& p : verify_trace(trace)) problems.push_back(where + p);
        if (r.at("status").get<std::string>() == "ok") {
            const std::uint64_t nfe = r.at("nfe_consumed").get<std::uint64_t>();
            if (!trace.empty() && trace.back().nfe_consumed != nfe)
                problems.push_back(where + "final NFE differs from results.jsonl");
            if (!trace.empty() && trace.back().best_so_far != r.at("best_reward").get<double>())
                problems.push_back(where + "final best_so_far differs from best_reward");
        }
        if (r.contains("tree")) {
            const json tree = read_json_file(dir / r.at("tree").get<std::string>());
            for (const auto& p : verify_tree(tree, trace.size())) problems.push_back(r.at("tree").get<std::string>() + ": " + p);
        }
    }
    return problems;
}

}  // namespace umf
