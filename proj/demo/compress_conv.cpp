// SPDX-License-Identifier: Apache-2.0
//
// Plans, decomposes and runs one 1-D convolution kernel three ways and prints
// parameter, error and MAC figures for each.
#include <cstdio>
#include <random>

#include "tdz/tdz.hpp"

int main() {
  using namespace tdz;
  const Shape shape{64, 64, 9};
  std::mt19937_64 rng(7);
  std::normal_distribution<float> normal;
  std::vector<float> w(element_count(shape));
  for (auto& v : w) v = normal(rng);
  const DenseTensor kernel(shape, w);

  std::vector<float> xs(64 * 40);
  for (auto& v : xs) v = normal(rng);
  const Signal x(DenseTensor({64, 40}, xs));
  const Signal dense = dense_conv1d(kernel, x);

  const double gamma = 0.25;
  std::printf("kernel %s, target ratio %.2f\n", shape_string(shape).c_str(), gamma);

  const auto tp = tucker_ranks(shape, gamma);
  const auto tf = decompose_tucker(kernel, tp.ranks);
  const auto ty = apply_factored_conv1d(tf, x);
  std::printf("tucker  ranks (%zu,%zu,%zu)  params %.4f  weight err %.4f  output err %.4f  macs %.4f\n", tp.ranks[0],
              tp.ranks[1], tp.ranks[2], tp.predicted_ratio, relative_error(kernel, reconstruct(tf)),
              relative_error(dense.data(), ty.data()), mac_report(tp, shape).ratio);

  const auto cpp = cp_rank(shape, gamma);
  const auto cf = decompose_cp(kernel, cpp.ranks[0]);
  const auto cy = apply_factored_conv1d(cf, x);
  std::printf("cp      rank %zu         params %.4f  weight err %.4f  output err %.4f  macs %.4f\n", cpp.ranks[0],
              cpp.predicted_ratio, relative_error(kernel, reconstruct(cf)), relative_error(dense.data(), cy.data()),
              mac_report(cpp, shape).ratio);

  const auto ttp = tt_ranks(shape, gamma);
  const auto tt = decompose_tt(kernel, ttp.ranks);
  const auto mc = mac_report(ttp, shape);
  std::printf("tt      ranks (%zu,%zu)     params %.4f  weight err %.4f  macs %.4f%s\n", ttp.ranks[0], ttp.ranks[1],
              ttp.predicted_ratio, relative_error(kernel, reconstruct(tt)), mc.ratio,
              mc.no_speedup ? "  (must be rebuilt before use)" : "");
  return 0;
}
