#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "mambamil/block.hpp"
#include "mambamil/errors.hpp"
#include "test_util.hpp"

namespace mambamil {
namespace {

using testing::expect_gradients;
using testing::max_abs_diff;
using testing::random_tensor;
using testing::values;
using testing::weighted_sum;

// Rows tagged 1..L so the ordering is visible in the values.
Tensor tagged_rows(std::size_t length, std::size_t width = 1) {
  std::vector<double> v(length * width);
  for (std::size_t r = 0; r < length; ++r)
    for (std::size_t c = 0; c < width; ++c) v[r * width + c] = static_cast<double>(r + 1) + 0.1 * static_cast<double>(c);
  return Tensor({length, width}, v);
}

TEST(Reorder, SixByTwo) {
  const auto r = reorder(tagged_rows(6), 2);
  EXPECT_EQ(r.padded_length, 6u);
  // a c e b d f
  EXPECT_EQ(values(r.x), (std::vector<double>{1, 3, 5, 2, 4, 6}));
}

TEST(Reorder, PadsWithZeroRows) {
  const auto r = reorder(tagged_rows(5), 2);
  EXPECT_EQ(r.padded_length, 6u);
  EXPECT_EQ(values(r.x), (std::vector<double>{1, 3, 5, 2, 4, 0}));
}

TEST(Reorder, SegmentOneIsIdentity) {
  const Tensor x = tagged_rows(7, 3);
  EXPECT_EQ(values(reorder(x, 1).x), values(x));
  EXPECT_EQ(values(restore(x, 7, 1)), values(x));
}

TEST(Restore, InvertsThePaddedExample) {
  const Tensor y({6, 1}, {1, 3, 5, 2, 4, 0});
  EXPECT_EQ(values(restore(y, 5, 2)), (std::vector<double>{1, 2, 3, 4, 5}));
  EXPECT_THROW(restore(Tensor::zeros({5, 1}), 5, 2), ContractError);
}

TEST(Reorder, BijectiveAndExactlyInvertedForAllSmallShapes) {
  for (std::size_t len = 1; len <= 200; ++len) {
    for (std::size_t seg = 1; seg <= 20; ++seg) {
      const auto fwd = reorder_index(len, seg);
      ASSERT_EQ(fwd.size(), padded_length(len, seg));
      std::vector<int> hits(len, 0);
      std::size_t pads = 0;
      for (auto s : fwd) {
        if (s < 0) {
          ++pads;
        } else {
          ASSERT_LT(static_cast<std::size_t>(s), len);
          ++hits[static_cast<std::size_t>(s)];
        }
      }
      ASSERT_EQ(pads, fwd.size() - len);
      ASSERT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
      const auto back = restore_index(len, seg);
      for (std::size_t q = 0; q < len; ++q) ASSERT_EQ(fwd[static_cast<std::size_t>(back[q])], static_cast<std::int64_t>(q));
    }
  }
  Rng rng(30);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 1 + rng.below(60), seg = 1 + rng.below(20);
    const Tensor x = random_tensor({len, 3}, rng);
    EXPECT_EQ(values(restore(reorder(x, seg).x, len, seg)), values(x));
  }
}

TEST(Reorder, ChangesTheOrderForNontrivialSegments) {
  Rng rng(31);
  for (std::size_t len : {6u, 17u, 50u}) {
    for (std::size_t seg = 2; seg + 1 <= len && seg <= 8; ++seg) {
      const Tensor x = random_tensor({len, 2}, rng);
      const auto r = reorder(x, seg);
      std::vector<double> head(r.x.data().begin(), r.x.data().begin() + len * 2);
      EXPECT_NE(head, values(x)) << "L=" << len << " R=" << seg;
    }
  }
}

TEST(Reorder, WorksOnBatchedInput) {
  Rng rng(32);
  const Tensor x = random_tensor({2, 7, 3}, rng);
  const auto r = reorder(x, 3);
  EXPECT_EQ(r.x.shape(), (Shape{2, 9, 3}));
  EXPECT_EQ(values(restore(r.x, 7, 3)), values(x));
}

TEST(CausalConv, Examples) {
  const Tensor x({3, 1}, {1, 2, 3});
  EXPECT_EQ(values(causal_conv1d(x, Tensor({1, 1}, {1}), Tensor::zeros({1}))), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(values(causal_conv1d(x, Tensor({1, 2}, {0, 1}), Tensor::zeros({1}))), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(values(causal_conv1d(x, Tensor({1, 2}, {1, 0}), Tensor::zeros({1}))), (std::vector<double>{0, 1, 2}));
  EXPECT_EQ(values(causal_conv1d(x, Tensor({1, 1}, {2}), Tensor::vector({0.5}))), (std::vector<double>{2.5, 4.5, 6.5}));
}

TEST(CausalConv, ChannelsAreIndependent) {
  const Tensor x({2, 2}, {1, 10, 2, 20});
  const Tensor y = causal_conv1d(x, Tensor({2, 2}, {1, 1, 0, 1}), Tensor::zeros({2}));
  EXPECT_EQ(values(y), (std::vector<double>{1, 10, 3, 20}));
}

BlockConfig small_config(Variant v = Variant::kSr) {
  BlockConfig c;
  c.d_model = 4;
  c.expand = 2;
  c.n_state = 4;
  c.segment = 3;
  c.conv_k = 2;
  c.variant = v;
  return c;
}

TEST(Block, ConfigValidation) {
  BlockConfig c = small_config();
  c.segment = 0;
  EXPECT_ANY_THROW(c.validate());
  c = small_config();
  c.n_state = 0;
  EXPECT_THROW(c.validate(), ContractError);
  EXPECT_EQ(small_config().inner(), 8u);
  EXPECT_THROW(parse_variant("tri"), ContractError);
  EXPECT_EQ(parse_variant("bi"), Variant::kBi);
}

TEST(Block, PreservesShape) {
  Rng rng(33);
  for (Variant v : {Variant::kSr, Variant::kVanilla, Variant::kBi}) {
    for (std::size_t m : {1u, 2u, 7u, 31u}) {
      const auto cfg = small_config(v);
      const auto p = init_block(cfg, rng);
      EXPECT_EQ(block_forward(random_tensor({m, 4}, rng), p, cfg).shape(), (Shape{m, 4}));
      EXPECT_EQ(block_forward(random_tensor({3, m, 4}, rng), p, cfg).shape(), (Shape{3, m, 4}));
    }
  }
  const auto cfg = small_config();
  const auto p = init_block(cfg, rng);
  EXPECT_THROW(block_forward(Tensor::zeros({5, 3}), p, cfg), DimensionError);
}

TEST(Block, SaturatedStepBiasStaysPositive) {
  Rng rng(41);
  const auto cfg = small_config();
  BlockParams p = init_block(cfg, rng);
  for (auto& [name, t] : p.named_parameters()) {
    if (name.find("dt_bias") == std::string::npos) continue;
    Tensor handle = t;
    std::fill(handle.mutable_data().begin(), handle.mutable_data().end(), -1e4);
  }
  for (double v : values(block_forward(random_tensor({12, 4}, rng), p, cfg))) EXPECT_TRUE(std::isfinite(v));
}

TEST(Block, AllZeroWeightsPassTheResidualThrough) {
  Rng rng(34);
  for (Variant v : {Variant::kSr, Variant::kVanilla, Variant::kBi}) {
    const auto cfg = small_config(v);
    BlockParams p = init_block(cfg, rng);
    for (auto& [name, t] : p.named_parameters()) {
      Tensor handle = t;
      std::fill(handle.mutable_data().begin(), handle.mutable_data().end(), 0.0);
    }
    const Tensor x = random_tensor({9, 4}, rng);
    EXPECT_EQ(values(block_forward(x, p, cfg)), values(x));
  }
}

TEST(Block, ZeroOutputProjectionIsIdentity) {
  Rng rng(35);
  for (Variant v : {Variant::kSr, Variant::kVanilla, Variant::kBi}) {
    for (bool skip : {false, true}) {
      auto cfg = small_config(v);
      cfg.d_skip = skip;
      const auto p = init_block(cfg, rng, {.zero_out = true});
      const Tensor x = random_tensor({11, 4}, rng, 3.0);
      EXPECT_EQ(max_abs_diff(block_forward(x, p, cfg), x), 0.0);
    }
  }
}

TEST(Block, SharedBranchesAtSegmentOneAgreeExactly) {
  Rng rng(36);
  auto cfg = small_config();
  cfg.segment = 1;
  cfg.d_skip = false;
  BlockParams p = init_block(cfg, rng);
  p.rs = p.os;
  p.w_x1 = p.w_x0;
  const Tensor x = random_tensor({8, 4}, rng);
  const auto trace = block_forward_trace(x, p, cfg);
  EXPECT_EQ(values(trace.y_os), values(trace.y_rs));
  // out = W_out (2 y_os * gate) + b + x
  const Tensor fused = scale(mul(trace.y_os, trace.gate), 2.0);
  const Tensor expected = add(linear(reshape(fused, {8, 8}), p.w_out, p.b_out), x);
  EXPECT_LT(max_abs_diff(trace.out, expected), 1e-14);
}

TEST(Block, VariantsDisagreeOnGenericInput) {
  Rng rng(37);
  const Tensor x = random_tensor({12, 4}, rng);
  auto sr = small_config(Variant::kSr), bi = small_config(Variant::kBi);
  Rng a(5), b(5);
  const auto p_sr = init_block(sr, a);
  const auto p_bi = init_block(bi, b);
  EXPECT_GT(max_abs_diff(block_forward(x, p_sr, sr), block_forward(x, p_bi, bi)), 1e-6);
}

TEST(Block, BatchRowsAreIndependent) {
  Rng rng(38);
  const auto cfg = small_config();
  const auto p = init_block(cfg, rng);
  const Tensor x = random_tensor({2, 7, 4}, rng);
  const Tensor y = block_forward(x, p, cfg);
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<double> row(x.data().begin() + b * 28, x.data().begin() + (b + 1) * 28);
    const Tensor yb = block_forward(Tensor({7, 4}, row), p, cfg);
    for (std::size_t i = 0; i < 28; ++i) EXPECT_EQ(y[b * 28 + i], yb[i]);
  }
}

TEST(Block, GradientsMatchFiniteDifferences) {
  for (Variant v : {Variant::kSr, Variant::kVanilla, Variant::kBi}) {
    Rng rng(39);
    const auto cfg = small_config(v);
    BlockParams p = init_block(cfg, rng);
    // Larger steps than the default init so the state path carries signal the
    // finite differences can resolve.
    for (BranchParams* br : {&p.os, &p.rs}) {
      if (!br->dt_bias.defined()) continue;
      for (auto& b : br->dt_bias.mutable_data()) b = inverse_softplus(rng.uniform(0.1, 1.0));
    }
    Tensor x = random_tensor({1, 7, 4}, rng);
    auto leaves = p.named_parameters();
    leaves.emplace_back("x", x);
    expect_gradients([&] { return weighted_sum(block_forward(x, p, cfg)); }, leaves);
  }
}

}  // namespace
}  // namespace mambamil
