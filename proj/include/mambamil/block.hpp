#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mambamil/rng.hpp"
#include "mambamil/tensor.hpp"

namespace mambamil {

// How the second branch orders the sequence.
//   kSr:      segment transposition (reorder / restore)
//   kVanilla: no second branch
//   kBi:      time reversal
enum class Variant { kSr, kVanilla, kBi };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct BlockConfig {
  std::size_t d_model = 256;
  std::size_t expand = 2;
  std::size_t n_state = 16;
  std::size_t segment = 10;  // R, instances per segment
  std::size_t conv_k = 4;
  std::size_t dt_rank = 0;  // 0 selects ceil(d_model / 16)
  bool d_skip = true;
  Variant variant = Variant::kSr;

  std::size_t inner() const { return expand * d_model; }
  std::size_t resolved_dt_rank() const { return dt_rank ? dt_rank : (d_model + 15) / 16; }
  void validate() const;
};

// Per-branch weights: depthwise conv, input-dependent projections and the
// state matrix stored as A = -exp(a_log).
struct BranchParams {
  Tensor conv_w;     // [E, k]
  Tensor conv_b;     // [E]
  Tensor w_b;        // [E, N]
  Tensor w_c;        // [E, N]
  Tensor w_dt_down;  // [E, r]
  Tensor w_dt_up;    // [r, E]
  Tensor dt_bias;    // [E]
  Tensor a_log;      // [E, N]
  Tensor d_skip;     // [E], undefined when the skip term is disabled
};

struct BlockParams {
  Tensor norm_gamma, norm_beta;  // [D]
  Tensor w_z, w_x0, w_x1;        // [D, E]; w_x1 undefined for the vanilla variant
  BranchParams os;
  BranchParams rs;               // unused for the vanilla variant
  Tensor w_out;                  // [E, D]
  Tensor b_out;                  // [D]

  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix = "") const;
};

struct BlockInit {
  // Zero W_out and its bias so the block starts as the identity map.
  bool zero_out = false;
};

BlockParams init_block(const BlockConfig& config, Rng& rng, const BlockInit& init = {});

// Padded length ceil(L / R) * R.
std::size_t padded_length(std::size_t length, std::size_t segment);

// Source row for every reordered position: with N_seg = L_pad / R, position
// i * N_seg + j reads input row j * R + i. Rows past L are padding and map to -1.
std::vector<std::int64_t> reorder_index(std::size_t length, std::size_t segment);

// Row of the reordered sequence holding each original position q < L.
std::vector<std::int64_t> restore_index(std::size_t length, std::size_t segment);

struct Reordered {
  Tensor x;
  std::size_t padded_length;
};

// Both operate on the second-to-last axis of [..., L, D].
Reordered reorder(const Tensor& x, std::size_t segment);
Tensor restore(const Tensor& y, std::size_t length, std::size_t segment);

// Intermediate values of one block evaluation.
struct BlockTrace {
  Tensor y_os;  // scan output of the original-order branch, [Bb, M, E]
  Tensor y_rs;  // second-branch scan output restored to original order; undefined for vanilla
  Tensor gate;  // silu(z)
  Tensor out;
};

// One SR-Mamba block over X[Bb, M, D] (or [M, D] as a batch of one).
Tensor block_forward(const Tensor& x, const BlockParams& params, const BlockConfig& config);
BlockTrace block_forward_trace(const Tensor& x, const BlockParams& params, const BlockConfig& config);

// The scan path of one branch: silu(conv(x)) -> projections -> selective scan.
Tensor branch_forward(const Tensor& x, const BranchParams& p, const BlockConfig& config);

}  // namespace mambamil
