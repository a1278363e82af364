// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "json.hpp"
#include "oracles.hpp"
#include "tdz/cli.hpp"
#include "tdz/tdz.hpp"

namespace fs = std::filesystem;
using namespace tdz;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome criterion1() {
  const auto t0 = Clock::now();
  const auto plan = svd_rank(384, 384, 0.25);
  const double ms = seconds_since(t0) * 1e3;
  // Independent arithmetic: 0.25·384·384/768 = 48, 48·768 / 384² = 1/4.
  const bool ok = plan.ranks == std::vector<Index>{48} && plan.factored_params * 4 == plan.original_params &&
                  plan.predicted_ratio == 0.25 && ms < 1.0;
  return {ok, "rank=" + std::to_string(plan.ranks.at(0)) + " ratio=" + std::to_string(plan.predicted_ratio) +
                  " time_ms=" + std::to_string(ms)};
}

Outcome criterion2() {
  const Shape shape{384, 384, 15};
  const auto plan = tucker_ranks(shape, 0.25);
  const auto trace = oracle::tucker_halving_trace(shape, 0.25);
  const Index core = 192 * 192 * 7, legs = 384 * 192 + 384 * 192 + 15 * 7;
  bool ok = plan.ranks == std::vector<Index>{192, 192, 7} && plan.ranks == trace &&
            plan.factored_params == core + legs && plan.factored_params == 405609 &&
            plan.original_params == 2211840;
  // The first halving happens unconditionally, even when the full-rank ratio
  // already meets the target.
  bool first_halving = true;
  for (double g : {1.0, 2.0, 100.0}) {
    const auto p = tucker_ranks(Shape{8, 8, 8}, g);
    first_halving = first_halving && p.ranks == std::vector<Index>{4, 4, 4} &&
                    p.ranks == oracle::tucker_halving_trace(Shape{8, 8, 8}, g);
  }
  ok = ok && first_halving;
  return {ok, "ranks=(" + std::to_string(plan.ranks[0]) + "," + std::to_string(plan.ranks[1]) + "," +
                  std::to_string(plan.ranks[2]) + ") params=" + std::to_string(plan.factored_params) + "/" +
                  std::to_string(plan.original_params) + " first_halving_at_ge1=" + (first_halving ? "yes" : "no")};
}

// Counts tensors on which CP error exceeds Tucker error at target gamma.
int cp_worse_count(double gamma, int trials, std::string& note) {
  const Shape shape{16, 16, 5};
  const auto tp = tucker_ranks(shape, gamma);
  const auto cp = cp_rank(shape, gamma);
  int worse = 0;
  for (int s = 0; s < trials; ++s) {
    std::mt19937_64 rng(1000 + s);
    const auto t = oracle::random_tensor(shape, rng);
    const double et = oracle::rel_err(t, reconstruct(decompose_tucker(t, tp.ranks)));
    const double ec = oracle::rel_err(t, reconstruct(decompose_cp(t, cp.ranks[0], {.seed = static_cast<std::uint64_t>(s), .svd = {}})));
    worse += ec > et ? 1 : 0;
  }
  std::ostringstream o;
  o << "gamma=" << gamma << " tucker_ratio=" << tp.predicted_ratio << " cp_rank=" << cp.ranks[0]
    << " cp_ratio=" << cp.predicted_ratio << " cp_worse=" << worse << "/" << trials;
  note = o.str();
  return worse;
}

Outcome criterion3() {
  const auto plan = cp_rank(Shape{384, 384, 15}, 0.25);
  const double want_ratio = 15.0 * (1 + 384 + 384 + 15) / 2211840.0;
  bool ok = plan.ranks == std::vector<Index>{15} && std::abs(plan.predicted_ratio - want_ratio) < 1e-12 &&
            std::abs(plan.predicted_ratio - 0.00532) < 5e-5;
  // Both planners receive the same target; checked at the encoder target and
  // at a looser one.
  std::ostringstream o;
  o << "cp_rank=" << plan.ranks[0] << " ratio=" << plan.predicted_ratio;
  for (double gamma : {0.25, 0.5}) {
    std::string note;
    ok = cp_worse_count(gamma, 20, note) >= 18 && ok;
    o << " | " << note;
  }
  return {ok, o.str()};
}

Outcome criterion4() {
  const Shape shape{384, 384, 15};
  const auto plan = tt_ranks(shape, 0.25);
  // Hand trace from the bounds (384, 15): (192, 7.5) gives ratio ≈ 0.2834,
  // still above 0.25; (96, 3.75) gives ≈ 0.0792 and stops. Floor: (96, 3).
  const auto mc = mac_report(plan, shape);
  const bool ok = plan.ranks == std::vector<Index>{96, 3} && mc.no_speedup && mc.factored_macs >= mc.dense_macs;
  return {ok, "ranks=(" + std::to_string(plan.ranks[0]) + "," + std::to_string(plan.ranks[1]) +
                  ") no_speedup=" + (mc.no_speedup ? "true" : "false")};
}

Outcome criterion5() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5);
  double worst = 0.0;
  int cases = 0;
  auto draw_shape = [&](Index order) {
    std::uniform_int_distribution<Index> dim(1, 32);
    for (;;) {
      Shape s(order);
      for (auto& d : s) d = dim(rng);
      if (element_count(s) <= 40000) return s;
    }
  };
  std::vector<Shape> shapes{{32, 32}, {32, 32, 32}, {1, 32, 1, 32}, {32, 1, 32}};
  for (int i = 0; i < 20; ++i) shapes.push_back(draw_shape(2 + static_cast<Index>(i % 3)));
  for (const auto& shape : shapes) {
    const auto t = oracle::random_tensor(shape, rng);
    if (shape.size() == 2) {
      worst = std::max(worst, oracle::rel_err(t, reconstruct(decompose_svd(t, std::min(shape[0], shape[1])))));
      ++cases;
    }
    worst = std::max(worst, oracle::rel_err(t, reconstruct(decompose_tucker(t, shape))));
    worst = std::max(worst, oracle::rel_err(t, reconstruct(decompose_tt(t, tt_rank_bounds(shape)))));
    cases += 2;
  }
  const double secs = seconds_since(t0);
  std::ostringstream o;
  o << cases << " reconstructions worst_rel_err=" << worst << " time_s=" << secs;
  return {worst <= 1e-5 && secs < 30.0, o.str()};
}

Outcome criterion6() {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<Index> dim(8, 48);
  double worst = 0.0;
  for (int m = 0; m < 50; ++m) {
    const Index rows = dim(rng), cols = dim(rng);
    const Index p = std::min(rows, cols);
    std::vector<double> s(p);
    for (Index k = 0; k < p; ++k) s[k] = 10.0 * std::pow(0.85, static_cast<double>(k)) + 0.05;
    const auto a = oracle::to_tensor(oracle::planted(rows, cols, s, rng));
    const Index rank = 1 + static_cast<Index>(m) % (p - 1);
    double tail = 0.0;
    for (Index k = rank; k < p; ++k) tail += s[k] * s[k];
    tail = std::sqrt(tail);
    const auto approx = reconstruct(decompose_svd(a, rank));
    double err = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a.data()[i]) - approx.data()[i];
      err += d * d;
    }
    worst = std::max(worst, std::abs(std::sqrt(err) - tail) / tail);
  }
  std::ostringstream o;
  o << "50 matrices worst |err-tail|/tail=" << worst;
  return {worst <= 1e-4, o.str()};
}

Outcome criterion7() {
  int bad_hooi = 0, bad_cp = 0;
  double worst_rise = 0.0;
  auto rises = [&](const std::vector<double>& trace) {
    bool bad = false;
    for (Index i = 1; i < trace.size(); ++i) {
      worst_rise = std::max(worst_rise, trace[i] - trace[i - 1]);
      bad = bad || trace[i] > trace[i - 1] + 1e-6;
    }
    return bad;
  };
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(700 + seed);
    const auto t = oracle::random_tensor(Shape{12, 10, 8}, rng);
    std::vector<double> trace;
    decompose_tucker(t, std::vector<Index>{4, 3, 3}, {.hooi_sweeps = 10, .svd = {}}, &trace);
    bad_hooi += rises(trace) ? 1 : 0;
    decompose_cp(t, 5, {.max_iters = 60, .tol = 0.0, .seed = static_cast<std::uint64_t>(seed), .svd = {}}, &trace);
    bad_cp += rises(trace) ? 1 : 0;
  }
  std::ostringstream o;
  o << "non-monotone runs hooi=" << bad_hooi << "/20 cp=" << bad_cp << "/20 worst_rise=" << worst_rise;
  return {bad_hooi == 0 && bad_cp == 0, o.str()};
}

oracle::Mat random_signal(Index channels, Index frames, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  oracle::Mat x = oracle::zeros(channels, frames);
  for (auto& row : x)
    for (auto& v : row) v = static_cast<float>(normal(rng));
  return x;
}

double mat_rel_gap(const oracle::Mat& want, const DenseTensor& got) {
  double d = 0.0, n = 0.0;
  for (Index i = 0; i < want.size(); ++i)
    for (Index j = 0; j < want[i].size(); ++j) {
      const double e = want[i][j] - got(i, j);
      d += e * e;
      n += want[i][j] * want[i][j];
    }
  return std::sqrt(d / n);
}

Outcome criterion8() {
  std::mt19937_64 rng(8);
  double worst = 0.0;
  constexpr int kProbes = 100;

  // Linear shapes.
  for (const auto& [out, in, rank] : {std::tuple<Index, Index, Index>{384, 384, 48}, {256, 384, 40}, {96, 48, 7}}) {
    const SvdFactors f{oracle::random_tensor({out, rank}, rng), oracle::random_tensor({rank, in}, rng)};
    const auto w = reconstruct(f);
    for (int p = 0; p < kProbes; ++p) {
      const auto x = oracle::random_tensor({in}, rng);
      const auto y = apply_factored_linear(f, x.data());
      std::vector<float> want(out);
      for (Index i = 0; i < out; ++i) {
        double s = 0.0;
        for (Index j = 0; j < in; ++j) s += static_cast<double>(w(i, j)) * x.data()[j];
        want[i] = static_cast<float>(s);
      }
      worst = std::max(worst, oracle::rel_err(want, y));
    }
  }

  // Conv shapes: (I, J, K) with Tucker ranks (R, S, T).
  Index traced = 0;
  bool trace_matches_formula = true;
  struct ConvCase {
    Shape shape;
    Shape ranks;
    int probes;
  };
  const std::vector<ConvCase> convs{{{384, 384, 15}, {192, 192, 7}, kProbes},
                                    {{64, 32, 5}, {16, 8, 3}, kProbes},
                                    {{24, 24, 3}, {24, 24, 3}, kProbes}};
  for (const auto& cc : convs) {
    TuckerFactors f;
    f.core = oracle::random_tensor(cc.ranks, rng);
    for (Index n = 0; n < 3; ++n) f.factors.push_back(oracle::random_tensor({cc.shape[n], cc.ranks[n]}, rng));
    const auto w = reconstruct(f);
    const Index i_ch = cc.shape[0], j_ch = cc.shape[1], k = cc.shape[2];
    const Index r = cc.ranks[0], s = cc.ranks[1];
    const Index frames = k + 3;
    for (int p = 0; p < cc.probes; ++p) {
      const auto x = random_signal(j_ch, frames, rng);
      MacTrace trace;
      const auto y = apply_factored_conv1d(f, Signal(oracle::to_tensor(x)), &trace);
      worst = std::max(worst, mat_rel_gap(oracle::conv1d(w, x), y.data()));
      const Index formula = j_ch * s + s * r * k + r * i_ch;
      trace_matches_formula = trace_matches_formula && trace.per_frame() == formula;
      if (cc.shape == Shape{384, 384, 15}) traced = trace.per_frame();
    }
  }
  const Index formula_big = 384 * 192 + 192 * 192 * 15 + 192 * 384;
  const bool equals_stated = traced == 405504;
  std::ostringstream o;
  o << "worst_rel_gap=" << worst << " instrumented_macs(384,384,15)=" << traced << " formula=" << formula_big
    << " stated=405504" << (equals_stated ? "" : " (instrumented count differs from the stated total)");
  return {worst <= 1e-4 && trace_matches_formula && traced == formula_big && equals_stated, o.str()};
}

int run_cli(std::vector<std::string> args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  return code;
}

Outcome criterion9(const fs::path& dir) {
  const auto t0 = Clock::now();
  struct Item {
    const char* name;
    const char* role;
    const char* group;
    Shape shape;
  };
  const std::vector<Item> items{{"encoder.proj", "linear_weight", "encoder", {384, 1536}},
                                {"encoder.conv", "conv1d_kernel", "encoder", {384, 384, 15}},
                                {"encoder.norm", "other", "encoder", {384}},
                                {"decoder.proj", "linear_weight", "decoder", {256, 384}},
                                {"decoder.conv", "conv1d_kernel", "decoder", {256, 256, 5}},
                                {"decoder.bias", "other", "decoder", {256}}};
  nlohmann::json inv = {{"tensors", nlohmann::json::array()}};
  Index before = 0, after = 0;
  for (const auto& it : items) {
    inv["tensors"].push_back({{"name", it.name}, {"role", it.role}, {"group", it.group}, {"shape", it.shape}});
    const double g = std::string(it.group) == "encoder" ? 0.25 : 0.30;
    const Index n = element_count(it.shape);
    before += n;
    if (std::string(it.role) == "linear_weight") {
      const Index i = it.shape[0], j = it.shape[1];
      const auto r = static_cast<Index>(std::floor(g * static_cast<double>(i * j) / static_cast<double>(i + j) + 1e-9));
      after += r * (i + j);
    } else if (std::string(it.role) == "conv1d_kernel") {
      const auto rk = oracle::tucker_halving_trace(it.shape, g);
      Index core = 1, legs = 0;
      for (Index m = 0; m < 3; ++m) {
        core *= rk[m];
        legs += it.shape[m] * rk[m];
      }
      after += core + legs;
    } else {
      after += n;
    }
  }
  std::ofstream(dir / "inventory.json") << inv.dump();
  const auto orig = (dir / "model.tdz").string(), comp = (dir / "model.small.tdz").string(),
             report = (dir / "report.json").string();
  const int gen = run_cli({"gen", "--shapes", (dir / "inventory.json").string(), "--output", orig, "--seed", "9"});
  const int cmp = run_cli({"compress", "--input", orig, "--output", comp, "--encoder-ratio", "0.250",
                           "--decoder-ratio", "0.300", "--report", report});
  std::string verify_out;
  const int ver = run_cli({"verify", "--original", orig, "--compressed", comp, "--tol", "0.5", "--json"}, &verify_out);
  const double secs = seconds_since(t0);

  bool totals_ok = false;
  Index rep_before = 0, rep_after = 0;
  if (cmp == 0) {
    std::ifstream in(report);
    const auto j = nlohmann::json::parse(in);
    rep_before = j["totals"]["params_before"].get<Index>();
    rep_after = j["totals"]["params_after"].get<Index>();
    Index row_before = 0, row_after = 0;
    for (const auto& t : j["tensors"]) {
      row_before += t["original_params"].get<Index>();
      row_after += t["factored_params"].get<Index>();
    }
    totals_ok = rep_before == before && rep_after == after && row_before == before && row_after == after;
  }
  double worst_err = -1.0;
  if (!verify_out.empty()) {
    const auto parsed = nlohmann::json::parse(verify_out);
    for (const auto& t : parsed["tensors"]) {
      worst_err = std::max(worst_err, t["relative_error"].get<double>());
    }
  }
  std::ostringstream o;
  o << "exit gen=" << gen << " compress=" << cmp << " verify=" << ver << " params " << rep_before << "->" << rep_after
    << " closed_form " << before << "->" << after << " worst_err=" << worst_err << " time_s=" << secs;
  return {gen == 0 && cmp == 0 && ver == 0 && totals_ok && secs < 60.0, o.str()};
}

Outcome criterion10(const fs::path& dir) {
  ModelContainer c;
  std::mt19937_64 rng(10);
  c.add({"enc.fc", Role::kLinearWeight, Group::kEncoder, decompose_svd(oracle::random_tensor({6, 5}, rng), 2)});
  c.add({"enc.conv", Role::kConv1dKernel, Group::kEncoder,
         decompose_tucker(oracle::random_tensor({4, 4, 3}, rng), std::vector<Index>{2, 2, 2})});
  c.add({"dec.conv", Role::kConv1dKernel, Group::kDecoder, decompose_cp(oracle::random_tensor({4, 3, 3}, rng), 2)});
  c.add({"dec.tt", Role::kConv1dKernel, Group::kDecoder,
         decompose_tt(oracle::random_tensor({3, 4, 3}, rng), std::vector<Index>{2, 2})});
  c.add({"bias", Role::kOther, Group::kOther, oracle::random_tensor({7}, rng)});
  const auto good = serialize(c);
  const Index header_end = 8 + format::get_u32(good.data() + 4);

  int typed = 0, untyped = 0, accepted = 0, zero_exit = 0;
  const auto path = (dir / "fuzz.tdz").string();
  for (int it = 0; it < 1000; ++it) {
    auto bytes = good;
    std::uniform_int_distribution<int> kind(0, 5);
    std::uniform_int_distribution<Index> pos(0, header_end - 1);
    std::uniform_int_distribution<int> byte(0, 255);
    const int flips = 1 + it % 4;
    switch (kind(rng)) {
      case 0:  // random byte overwrite
        for (int f = 0; f < flips; ++f) {
          const Index p = pos(rng);
          bytes[p] = static_cast<std::uint8_t>(bytes[p] ^ (1 + byte(rng) % 255));
        }
        break;
      case 1:  // truncate inside the header
        bytes.resize(pos(rng));
        break;
      case 2:  // insert a byte
        bytes.insert(bytes.begin() + static_cast<std::ptrdiff_t>(pos(rng)), static_cast<std::uint8_t>(byte(rng)));
        break;
      case 3:  // delete a byte
        bytes.erase(bytes.begin() + static_cast<std::ptrdiff_t>(pos(rng)));
        break;
      case 4: {  // corrupt the length field
        const Index p = 4 + static_cast<Index>(byte(rng) % 4);
        bytes[p] = static_cast<std::uint8_t>(bytes[p] ^ (1 + byte(rng) % 255));
        break;
      }
      default: {  // swap two header bytes that differ
        Index a = pos(rng), b = pos(rng);
        while (bytes[a] == bytes[b]) b = pos(rng);
        std::swap(bytes[a], bytes[b]);
        break;
      }
    }
    try {
      deserialize(bytes);
      ++accepted;
    } catch (const FormatError&) {
      ++typed;
    } catch (...) {
      ++untyped;
    }
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    zero_exit += run_cli({"info", "--input", path}) == 0 ? 1 : 0;
  }
  std::ostringstream o;
  o << "1000 mutations typed=" << typed << " untyped=" << untyped << " accepted=" << accepted
    << " zero_exit=" << zero_exit;
  return {typed == 1000 && zero_exit == 0, o.str()};
}

}  // namespace

int main() {
  const fs::path dir = fs::temp_directory_path() / "tdz_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},
      {5, criterion5}, {6, criterion6}, {7, criterion7}, {8, criterion8},
      {9, [&] { return criterion9(dir); }}, {10, [&] { return criterion10(dir); }}};
  int failed = 0;
  for (const auto& [id, check] : criteria) {
    Outcome r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failed += r.pass ? 0 : 1;
    std::printf("criterion %2d: %s  %s\n", id, r.pass ? "PASS" : "FAIL", r.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(dir);
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
