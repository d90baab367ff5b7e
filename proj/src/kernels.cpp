#include "umf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace umf::kernels {
namespace {

bool consistent(std::span<const TokenId> gen, TokenId mask_id, const SupportEntry& entry) {
    if (entry.tokens.size() != gen.size()) return false;
    for (std::size_t i = 0; i < gen.size(); ++i) {
        if (gen[i] != mask_id && gen[i] != entry.tokens[i]) return false;
    }
    return true;
}

void softmax_row(std::span<const double> in, double temperature, std::span<double> out) {
    if (temperature == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        out[static_cast<std::size_t>(argmax_token(in))] = 1.0;
        return;
    }
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t v = 0; v < in.size(); ++v) {
        out[v] = std::exp((in[v] - mx) / temperature);
        sum += out[v];
    }
    for (double& x : out) x /= sum;
}

}  // namespace

double posterior_marginals_serial(std::span<const TokenId> gen, TokenId mask_id,
                                  std::span<const SupportEntry> support,
                                  std::span<const std::size_t> masked, std::size_t vocab_size,
                                  std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    double total = 0.0;
    for (const SupportEntry& entry : support) {
        if (!consistent(gen, mask_id, entry)) continue;
        total += entry.probability;
        for (std::size_t k = 0; k < masked.size(); ++k) {
            const auto v = static_cast<std::size_t>(entry.tokens[masked[k]]);
            out[k * vocab_size + v] += entry.probability;
        }
    }
    return total;
}

double posterior_marginals_parallel(std::span<const TokenId> gen, TokenId mask_id,
                                    std::span<const SupportEntry> support,
                                    std::span<const std::size_t> masked, std::size_t vocab_size,
                                    std::span<double> out) {
    const auto n_support = static_cast<std::ptrdiff_t>(support.size());
    std::vector<char> keep(support.size(), 0);

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t s = 0; s < n_support; ++s) {
        keep[s] = consistent(gen, mask_id, support[s]) ? 1 : 0;
    }

    double total = 0.0;
    for (std::size_t s = 0; s < support.size(); ++s) {
        if (keep[s]) total += support[s].probability;
    }

    const auto n_masked = static_cast<std::ptrdiff_t>(masked.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < n_masked; ++k) {
        double* row = out.data() + k * vocab_size;
        std::fill(row, row + vocab_size, 0.0);
        for (std::size_t s = 0; s < support.size(); ++s) {
            if (!keep[s]) continue;
            row[static_cast<std::size_t>(support[s].tokens[masked[k]])] += support[s].probability;
        }
    }
    return total;
}

double kl_divergence(std::span<const double> q, std::span<const double> p) {
    double kl = 0.0;
    for (std::size_t v = 0; v < q.size(); ++v) {
        if (q[v] <= 0.0) continue;
        if (p[v] <= 0.0) return std::numeric_limits<double>::infinity();
        kl += q[v] * std::log(q[v] / p[v]);
    }
    // Rounding can leave tiny negatives when q == p.
    return std::max(kl, 0.0);
}

void tempered_rows_serial(std::span<const double> logits, std::size_t width, double temperature,
                          std::span<double> out) {
    const std::size_t rows = logits.size() / width;
    for (std::size_t r = 0; r < rows; ++r)
        softmax_row(logits.subspan(r * width, width), temperature, out.subspan(r * width, width));
}

void tempered_rows_parallel(std::span<const double> logits, std::size_t width, double temperature,
                            std::span<double> out) {
    const auto rows = static_cast<std::ptrdiff_t>(logits.size() / width);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r)
        softmax_row(logits.subspan(r * width, width), temperature, out.subspan(r * width, width));
}

}  // namespace umf::kernels
