// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 verification failure,
// 2 usage error, 3 I/O, format or processing error.
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tdz/compress.hpp"
#include "tdz/container.hpp"

namespace tdz::cli {

enum ExitCode : int { kOk = 0, kVerifyFailed = 1, kUsage = 2, kFailure = 3 };

namespace detail {

struct RatioValidator : CLI::Validator {
  RatioValidator() {
    name_ = "RATIO";
    func_ = [](const std::string& s) -> std::string {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(s, &used);
        if (used != s.size()) return "not a number: " + s;
      } catch (const std::exception&) {
        return "not a number: " + s;
      }
      if (!(v > 0.0 && v <= 1.0)) return "ratio must lie in (0, 1], got " + s;
      return {};
    };
  }
};

inline void write_text_atomically(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrorCode::kIo, "cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw FormatError(FormatErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw FormatError(FormatErrorCode::kIo, "cannot move " + tmp.string() + " to " + path.string());
  }
}

inline std::string fixed(double v, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

inline std::string join(const std::vector<Index>& v) {
  std::string s;
  for (Index i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s.empty() ? "-" : s;
}

// Header text of an already validated TDZ1 buffer.
inline nlohmann::json header_of(const std::vector<std::uint8_t>& bytes) {
  const Index len = format::get_u32(bytes.data() + 4);
  return nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(len));
}

struct Options {
  std::string input, output, report, original, compressed, shapes;
  double encoder_ratio = 0.25, decoder_ratio = 0.25, other_ratio = 0.25;
  std::string conv_method = "tucker";
  double tol = 1e-4;
  std::uint64_t seed = 0;
  bool json = false;
};

inline CompressionPolicy policy_from(const Options& o) {
  CompressionPolicy p;
  p.encoder_ratio = o.encoder_ratio;
  p.decoder_ratio = o.decoder_ratio;
  p.other_ratio = o.other_ratio;
  p.conv_method = *parse_method(o.conv_method);
  p.cp.seed = o.seed;
  return p;
}

inline int cmd_compress(const Options& o, std::ostream& out) {
  const auto input = load(o.input);
  const auto res = compress(input, policy_from(o));
  save(res.container, o.output);
  const auto report = to_json(res.report);
  if (!o.report.empty()) write_text_atomically(o.report, report.dump(2) + "\n");
  if (o.json) {
    out << report.dump() << "\n";
    return kOk;
  }
  for (const auto& t : res.report.tensors) {
    out << t.name << "  " << t.method << "  ranks=" << join(t.ranks) << "  params " << t.original_params << " -> "
        << t.factored_params << "  err=" << fixed(t.relative_error) << "\n";
  }
  out << "total params " << res.report.params_before << " -> " << res.report.params_after
      << "  ratio=" << fixed(res.report.global_ratio) << "\n";
  return kOk;
}

inline int cmd_verify(const Options& o, std::ostream& out, std::ostream& err) {
  const auto original = load(o.original);
  const auto compressed = load(o.compressed);
  VerifyResult res;
  try {
    res = verify(original, compressed, {.tol = o.tol, .seed = o.seed});
  } catch (const ValueError& e) {
    err << "verify: " << e.what() << "\n";
    return kVerifyFailed;
  }
  if (o.json) {
    out << to_json(res).dump() << "\n";
  } else {
    for (const auto& t : res.tensors) {
      out << (t.passed ? "PASS " : "FAIL ") << t.name << "  " << t.kind << "  err=" << fixed(t.relative_error);
      if (t.probe_error >= 0.0) out << "  probe=" << fixed(t.probe_error);
      if (!t.note.empty()) out << "  (" << t.note << ")";
      out << "\n";
    }
  }
  if (!res.all_passed()) {
    err << "verify: one or more tensors exceed tolerance " << o.tol << "\n";
    return kVerifyFailed;
  }
  return kOk;
}

inline int cmd_info(const Options& o, std::ostream& out) {
  const auto bytes = read_file(o.input);
  deserialize(bytes);
  const auto header = header_of(bytes);
  out << (o.json ? header.dump() : header.dump(2)) << "\n";
  return kOk;
}

// MAC counts per tensor: factored entries use their stored ranks, dense
// linear and conv entries the ranks the policy would choose.
inline int cmd_bench(const Options& o, std::ostream& out) {
  const auto c = load(o.input);
  const auto policy = policy_from(o);
  const auto plans = plan_compression(c, policy);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : c.entries()) {
    const Shape shape = e.shape();
    MacCount mc;
    std::string method = "dense";
    std::vector<Index> ranks;
    auto planned = std::find_if(plans.begin(), plans.end(), [&](const auto& p) { return p.name == e.name; });
    if (e.is_factored() && e.role != Role::kOther) {
      RankPlan plan;
      plan.method = *parse_method(kind_name(e.value));
      plan.ranks = format::entry_ranks(e.value);
      mc = mac_report(plan, shape);
      method = kind_name(e.value);
      ranks = plan.ranks;
    } else if (planned != plans.end()) {
      mc = mac_report(planned->plan, shape);
      method = to_string(planned->plan.method);
      ranks = planned->plan.ranks;
    } else {
      mc.dense_macs = mc.factored_macs = element_count(shape);
    }
    rows.push_back({{"name", e.name},
                    {"method", method},
                    {"ranks", ranks},
                    {"dense_macs", mc.dense_macs},
                    {"factored_macs", mc.factored_macs},
                    {"ratio", mc.ratio},
                    {"no_speedup", mc.no_speedup}});
    if (!o.json) {
      out << e.name << "  " << method << "  ranks=" << join(ranks) << "  macs " << mc.dense_macs << " -> "
          << mc.factored_macs << "  ratio=" << fixed(mc.ratio) << (mc.no_speedup ? "  (no speedup)" : "") << "\n";
    }
  }
  if (o.json) out << nlohmann::json{{"tensors", rows}}.dump() << "\n";
  return kOk;
}

inline int cmd_gen(const Options& o, std::ostream& out) {
  std::ifstream in(o.shapes);
  if (!in) throw FormatError(FormatErrorCode::kIo, "cannot open " + o.shapes);
  auto inventory = nlohmann::json::parse(in, nullptr, false);
  if (inventory.is_discarded()) throw FormatError(FormatErrorCode::kMalformedHeader, o.shapes + " is not valid JSON");
  const auto c = synthetic_container(parse_inventory(inventory), o.seed);
  save(c, o.output);
  if (!o.json) out << "wrote " << c.size() << " tensors to " << o.output << "\n";
  return kOk;
}

}  // namespace detail

/// Runs one invocation. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  detail::Options o;
  CLI::App app{"Low-rank tensor compression for model weights", "tdz"};
  app.require_subcommand(1, 1);
  const detail::RatioValidator ratio;
  const auto method = CLI::IsMember({"tucker", "cp", "tt"});

  auto add_policy = [&](CLI::App* sub) {
    sub->add_option("--encoder-ratio", o.encoder_ratio, "Target ratio for the encoder group")->check(ratio);
    sub->add_option("--decoder-ratio", o.decoder_ratio, "Target ratio for the decoder group")->check(ratio);
    sub->add_option("--other-ratio", o.other_ratio, "Target ratio for ungrouped tensors")->check(ratio);
    sub->add_option("--conv-method", o.conv_method, "Decomposition for convolution kernels")->check(method);
  };

  auto* compress_cmd = app.add_subcommand("compress", "Compress a TDZ1 container");
  compress_cmd->add_option("--input", o.input, "Input container")->required();
  compress_cmd->add_option("--output", o.output, "Output container")->required();
  compress_cmd->add_option("--report", o.report, "Write the JSON report here");
  add_policy(compress_cmd);
  compress_cmd->add_option("--seed", o.seed, "Seed for randomized initialization");

  auto* verify_cmd = app.add_subcommand("verify", "Check a compressed container against its original");
  verify_cmd->add_option("--original", o.original, "Original container")->required();
  verify_cmd->add_option("--compressed", o.compressed, "Compressed container")->required();
  verify_cmd->add_option("--tol", o.tol, "Relative Frobenius tolerance")->check(CLI::NonNegativeNumber);
  verify_cmd->add_option("--seed", o.seed, "Seed for the random probes");

  auto* info_cmd = app.add_subcommand("info", "Print a container header");
  info_cmd->add_option("--input", o.input, "Container")->required();

  auto* bench_cmd = app.add_subcommand("bench", "Report multiply-accumulate counts per tensor");
  bench_cmd->add_option("--input", o.input, "Container")->required();
  add_policy(bench_cmd);

  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic container from a shape inventory");
  gen_cmd->add_option("--shapes", o.shapes, "Shape inventory JSON")->required();
  gen_cmd->add_option("--output", o.output, "Output container")->required();
  gen_cmd->add_option("--seed", o.seed, "Random seed");

  app.add_flag("--json", o.json, "Machine-readable output");
  for (auto* sub : {compress_cmd, verify_cmd, info_cmd, bench_cmd, gen_cmd}) {
    sub->add_flag("--json", o.json, "Machine-readable output");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (compress_cmd->parsed()) return detail::cmd_compress(o, out);
    if (verify_cmd->parsed()) return detail::cmd_verify(o, out, err);
    if (info_cmd->parsed()) return detail::cmd_info(o, out);
    if (bench_cmd->parsed()) return detail::cmd_bench(o, out);
    if (gen_cmd->parsed()) return detail::cmd_gen(o, out);
  } catch (const FormatError& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return kFailure;
  } catch (const CompressionError& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace tdz::cli
