#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <malloc.h>
#include <sstream>

#include "mambamil/block.hpp"
#include "mambamil/errors.hpp"
#include "mambamil/rng.hpp"
#include "mambamil/ssm.hpp"
#include "options.hpp"

namespace mambamil::cli {

namespace {

std::vector<std::size_t> parse_lengths(const BenchOptions& o) {
  std::vector<std::size_t> out;
  if (o.lengths.empty()) {
    if (o.min_log2 > o.max_log2 || o.max_log2 > 30) throw ContractError("bench-scan: bad log2 length range");
    for (std::size_t p = o.min_log2; p <= o.max_log2; ++p) out.push_back(std::size_t{1} << p);
    return out;
  }
  std::stringstream ss(o.lengths);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(item, &pos);
    if (pos != item.size() || v == 0) throw ContractError("bench-scan: bad length '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ContractError("bench-scan: no lengths given");
  if (!std::is_sorted(out.begin(), out.end())) throw ContractError("bench-scan: lengths must be ascending");
  return out;
}

// Per-call seconds: one untimed warm-up, then each repeat runs enough calls to
// span at least kMinSample and the fastest repeat wins.
double time_min(std::size_t repeats, const std::function<void()>& fn) {
  constexpr double kMinSample = 0.2;
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  fn();
  const double first = std::chrono::duration<double>(clock::now() - t0).count();
  const std::size_t calls = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(kMinSample / std::max(first, 1e-9))));
  double best = INFINITY;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
    t0 = clock::now();
    for (std::size_t c = 0; c < calls; ++c) fn();
    best = std::min(best, std::chrono::duration<double>(clock::now() - t0).count() / static_cast<double>(calls));
  }
  return best;
}

struct Row {
  std::string kind;
  std::size_t length;
  double seconds;
};

}  // namespace

int cmd_bench_scan(const BenchOptions& o) {
  if (o.mode != "block" && o.mode != "scan") throw ContractError("bench-scan: mode must be block or scan");
  // Keep freed buffers in the heap: otherwise every large intermediate is a
  // fresh mmap and the timings measure page faults rather than the block.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  const auto lengths = parse_lengths(o);
  Rng rng(o.seed);
  std::vector<Row> rows;
  bool agree = true;

  if (o.mode == "block") {
    BlockConfig cfg;
    cfg.d_model = o.model_dim;
    cfg.n_state = o.n_state;
    cfg.segment = o.segment;
    cfg.validate();
    const BlockParams params = init_block(cfg, rng);
    std::vector<Tensor> inputs;
    for (std::size_t len : lengths) {
      std::vector<double> v(len * cfg.d_model);
      for (auto& x : v) x = rng.normal();
      inputs.emplace_back(Shape{len, cfg.d_model}, std::move(v));
    }
    // One warm-up sweep, then repeats sweep all lengths in turn so slow spells
    // on the host hit every length instead of skewing one ratio.
    std::vector<double> best(lengths.size(), INFINITY);
    double sink = 0.0;
    for (const Tensor& x : inputs) sink += block_forward(x, params, cfg)[0];
    for (std::size_t r = 0; r < std::max<std::size_t>(1, o.repeats); ++r) {
      for (std::size_t i = 0; i < lengths.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        sink += block_forward(inputs[i], params, cfg)[0];
        best[i] = std::min(best[i], std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
    }
    if (!std::isfinite(sink)) throw ContractError("bench-scan: non-finite block output");
    for (std::size_t i = 0; i < lengths.size(); ++i) rows.push_back({"block", lengths[i], best[i]});
  } else {
    for (std::size_t len : lengths) {
      std::vector<double> a(len), b(len);
      for (auto& x : a) x = rng.uniform(0.0, 1.0);
      for (auto& x : b) x = rng.normal();
      std::vector<double> seq, par;
      rows.push_back({"scan-seq", len, time_min(o.repeats, [&] { seq = affine_scan(a, b, ScanMode::kSequential); })});
      rows.push_back({"scan-par", len, time_min(o.repeats, [&] {
                        par = affine_scan(a, b, ScanMode::kParallel, {64, o.workers});
                      })});
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        diff = std::max(diff, std::abs(seq[i] - par[i]));
        scale = std::max(scale, std::abs(seq[i]));
      }
      const double rel = scale > 0.0 ? diff / scale : diff;
      agree = agree && rel < 1e-10;
      std::printf("length %zu  parallel/sequential max rel diff %.3e  speedup %.2fx (%zu workers)\n", len, rel,
                  rows[rows.size() - 2].seconds / rows.back().seconds, o.workers);
    }
  }

  std::error_code ec;
  std::filesystem::create_directories(o.out, ec);
  const auto path = o.out / "bench.csv";
  std::ofstream csv(path, std::ios::trunc);
  if (!csv) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string() + " for writing");
  csv << "kind,length,seconds,throughput,ratio\n";
  std::printf("%-9s %10s %12s %14s %8s\n", "kind", "length", "seconds", "items/s", "ratio");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    std::string ratio;
    for (std::size_t j = i; j-- > 0;) {
      if (rows[j].kind == r.kind) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", r.seconds / rows[j].seconds);
        ratio = buf;
        break;
      }
    }
    const double throughput = static_cast<double>(r.length) / r.seconds;
    char line[160];
    std::snprintf(line, sizeof line, "%s,%zu,%.6e,%.6e,%s", r.kind.c_str(), r.length, r.seconds, throughput,
                  ratio.c_str());
    csv << line << '\n';
    std::printf("%-9s %10zu %12.6f %14.1f %8s\n", r.kind.c_str(), r.length, r.seconds, throughput, ratio.c_str());
  }
  if (!csv) throw FormatError(FormatError::Kind::kIo, "write failed for " + path.string());
  return agree ? kExitOk : kExitVerify;
}

}  // namespace mambamil::cli
