#include <gtest/gtest.h>

#include <string>

#include "hpigcn/ops.hpp"
#include "hpigcn/rep_tcn.hpp"
#include "reference.hpp"

namespace hpigcn {
namespace {

template <typename T>
BatchNormParams<T> unit_bn(std::size_t c) {
  BatchNormParams<T> bn;
  bn.mean.assign(c, T(0));
  bn.variance.assign(c, T(0.75));
  bn.scale.assign(c, T(1));
  bn.shift.assign(c, T(0));
  bn.epsilon = T(0.25);
  return bn;
}

TEST(RepTcn, ZeroWeightsGiveZeroOutput) {
  RepTcnTrainParams<float> p;
  p.config = {4, 4, 5, 1};
  p.a = {TemporalConvParams<float>::zeros(4, 4, 5, 1, 2, false), unit_bn<float>(4)};
  p.b = SerialBranchParams<float>{PointwiseConvParams<float>::zeros(4, 4, false),
                                  TemporalConvParams<float>::zeros(4, 4, 5, 1, 2, false),
                                  unit_bn<float>(4)};
  p.c = SerialBranchParams<float>{PointwiseConvParams<float>::zeros(4, 4, false),
                                  TemporalConvParams<float>::zeros(4, 4, 3, 1, 1, false),
                                  unit_bn<float>(4)};
  // The pool has fixed taps, so its branch is silenced through the BN scale.
  auto silent = unit_bn<float>(4);
  silent.scale.assign(4, 0.0f);
  p.d = PoolBnBranch<float>{3, silent};
  Rng rng(1);
  const auto x = ref::random_tensor<float>(rng, {2, 4, 10, 3});
  const auto train = rep_tcn_forward_train(x, p);
  const auto infer = rep_tcn_forward_infer(x, rep_tcn_fuse(p));
  for (float e : train.data()) EXPECT_EQ(e, 0.0f);
  for (float e : infer.data()) EXPECT_EQ(e, 0.0f);
}

TEST(RepTcn, BranchAOnly) {
  Rng rng(2);
  RepTcnTrainParams<double> p;
  p.config = {3, 5, 5, 2};
  p.a = {ref::random_conv<double>(rng, 5, 3, 5, 2, 2, true), ref::random_bn<double>(rng, 5)};
  const auto x = ref::random_tensor<double>(rng, {2, 3, 12, 4});
  const auto expect = batch_norm_infer(temporal_conv(x, p.a.conv), p.a.bn);
  EXPECT_EQ(rep_tcn_forward_train(x, p), expect);
  const auto fused = rep_tcn_fuse(p);
  EXPECT_EQ(fused.fused, blend2_fuse_bn(p.a.conv, p.a.bn));
}

TEST(RepTcn, TrainForwardIsSumOfBranches) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const RepTcnConfig cfg{ref::pick(rng, 1, 6), trial % 2 == 0 ? 6u : ref::pick(rng, 1, 6),
                           trial % 3 == 0 ? 9u : 5u, 1 + static_cast<std::size_t>(trial % 2)};
    const auto p = ref::random_rep_tcn<double>(rng, cfg);
    const auto x = ref::random_tensor<double>(rng, {2, cfg.c_in, ref::pick(rng, 9, 16), 5});
    EXPECT_LE(ref::max_abs_diff(ref::rep_tcn_train(ref::from(x), p), rep_tcn_forward_train(x, p)),
              1e-12);
  }
}

TEST(RepTcn, FusedParameterCount) {
  Rng rng(4);
  const auto p = ref::random_rep_tcn<float>(rng, {64, 64, 5, 1});
  const auto fused = rep_tcn_fuse(p);
  EXPECT_EQ(fused.param_count(), 20544u);
  EXPECT_EQ(fused.fused.kernel, 5u);
  EXPECT_EQ(fused.fused.bias.size(), 64u);
  EXPECT_LT(fused.param_count(), p.param_count());
}

template <typename T>
void check_equivalence(std::uint64_t seed, double tolerance) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c_in = ref::pick(rng, 1, 8);
    const bool keep = trial % 2 == 0;
    const RepTcnConfig cfg{c_in, keep ? c_in : ref::pick(rng, 1, 8), trial % 4 == 0 ? 9u : 5u,
                           1 + static_cast<std::size_t>(trial % 3 == 0)};
    const auto p = ref::random_rep_tcn<T>(rng, cfg);
    const auto x = ref::random_tensor<T>(rng, {2, c_in, ref::pick(rng, cfg.k_max, 16), 5});
    const auto train = rep_tcn_forward_train(x, p);
    const auto infer = rep_tcn_forward_infer(x, rep_tcn_fuse(p));
    worst = std::max(worst, static_cast<double>(max_abs_diff(train, infer)));
  }
  EXPECT_LE(worst, tolerance);
}

TEST(RepTcn, FusedMatchesTrainFloat) { check_equivalence<float>(5, 1e-4); }
TEST(RepTcn, FusedMatchesTrainDouble) { check_equivalence<double>(6, 1e-10); }

TEST(RepTcn, StrideTwoHalvesTime) {
  Rng rng(7);
  const auto p = ref::random_rep_tcn<float>(rng, {8, 8, 5, 2});
  const auto x = ref::random_tensor<float>(rng, {1, 8, 64, 3});
  EXPECT_EQ(rep_tcn_forward_train(x, p).shape().t, 32u);
  EXPECT_EQ(rep_tcn_forward_infer(x, rep_tcn_fuse(p)).shape().t, 32u);
}

TEST(RepTcn, IdentityFusedPassesThrough) {
  RepTcnInferParams<float> p{TemporalConvParams<float>::zeros(3, 3, 5, 1, 2, true)};
  for (std::size_t c = 0; c < 3; ++c) p.fused.w(c, c, 2) = 1;
  Rng rng(8);
  const auto x = ref::random_tensor<float>(rng, {2, 3, 9, 4});
  EXPECT_EQ(rep_tcn_forward_infer(x, p), x);
}

TEST(RepTcn, FusedRunsOneConv) {
  Rng rng(9);
  const auto p = ref::random_rep_tcn<float>(rng, {8, 8, 5, 1});
  const auto fused = rep_tcn_fuse(p);
  const auto x = ref::random_tensor<float>(rng, {1, 8, 16, 5});
  reset_kernel_counters();
  (void)rep_tcn_forward_infer(x, fused);
  EXPECT_EQ(kernel_counters().temporal_conv, 1u);
  EXPECT_EQ(kernel_counters().pointwise_conv, 0u);
  EXPECT_EQ(kernel_counters().avg_pool, 0u);
  reset_kernel_counters();
  (void)rep_tcn_forward_train(x, p);
  EXPECT_EQ(kernel_counters().temporal_conv, 3u);
  EXPECT_EQ(kernel_counters().pointwise_conv, 2u);
  EXPECT_EQ(kernel_counters().avg_pool, 1u);
}

TEST(RepTcn, FuseIsDeterministic) {
  Rng rng(10);
  const auto p = ref::random_rep_tcn<float>(rng, {6, 6, 9, 1});
  EXPECT_EQ(rep_tcn_fuse(p).fused, rep_tcn_fuse(p).fused);
}

TEST(RepTcn, PoolBranchNeedsEqualChannels) {
  Rng rng(11);
  auto p = ref::random_rep_tcn<float>(rng, {4, 6, 5, 1});
  EXPECT_FALSE(p.d.has_value());
  p.d = PoolBnBranch<float>{3, ref::random_bn<float>(rng, 6)};
  EXPECT_THROW(rep_tcn_fuse(p), ConfigError);
}

TEST(RepTcn, ErrorsNameTheBranch) {
  Rng rng(12);
  auto p = ref::random_rep_tcn<float>(rng, {4, 4, 5, 1});
  p.b->second = ref::random_conv<float>(rng, 4, 4, 7, 1, 3, false);
  try {
    (void)rep_tcn_fuse(p);
    FAIL() << "oversized kernel accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("branch B"), std::string::npos) << e.what();
  }
  p = ref::random_rep_tcn<float>(rng, {4, 4, 5, 1});
  p.c->bn = ref::random_bn<float>(rng, 3);
  try {
    (void)rep_tcn_fuse(p);
    FAIL() << "mismatched batch norm accepted";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("branch C"), std::string::npos) << e.what();
  }
}

TEST(RepTcn, RejectsBadConfig) {
  Rng rng(13);
  EXPECT_THROW((RepTcnConfig{4, 4, 4, 1}.validate()), ConfigError);
  EXPECT_THROW((RepTcnConfig{4, 4, 3, 1}.validate()), ConfigError);
  EXPECT_THROW((RepTcnConfig{4, 4, 5, 3}.validate()), ConfigError);
  const auto p = ref::random_rep_tcn<float>(rng, {4, 4, 5, 1});
  EXPECT_THROW(rep_tcn_forward_train(Tensor4<float>({1, 3, 8, 2}), p), ShapeError);
}

}  // namespace
}  // namespace hpigcn
