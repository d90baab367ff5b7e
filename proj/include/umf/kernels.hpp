#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP version and a serial
// reference; both sum in the same order so their results are bit-identical
// regardless of thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "umf/core.hpp"
#include "umf/denoiser.hpp"

namespace umf::kernels {

/// Accumulates, for every masked position k and token v, the support mass of
/// sequences consistent with `gen` whose token at that position is v.
/// `out` has masked.size() * vocab_size entries and is overwritten.
/// Returns the total consistent mass.
double posterior_marginals_serial(std::span<const TokenId> gen, TokenId mask_id,
                                  std::span<const SupportEntry> support,
                                  std::span<const std::size_t> masked, std::size_t vocab_size,
                                  std::span<double> out);

double posterior_marginals_parallel(std::span<const TokenId> gen, TokenId mask_id,
                                    std::span<const SupportEntry> support,
                                    std::span<const std::size_t> masked, std::size_t vocab_size,
                                    std::span<double> out);

/// KL(q || p) with 0 log 0 = 0; +inf when q > 0 where p = 0.
double kl_divergence(std::span<const double> q, std::span<const double> p);

/// Row-wise softmax(logits / T) into `out` (same layout), serial and parallel.
void tempered_rows_serial(std::span<const double> logits, std::size_t width, double temperature,
                          std::span<double> out);
void tempered_rows_parallel(std::span<const double> logits, std::size_t width, double temperature,
                            std::span<double> out);

}  // namespace umf::kernels
