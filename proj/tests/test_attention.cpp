#include "msfnet/attention.hpp"
#include "msfnet/errors.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace msfnet;
using namespace msfnet::attention;
using msfnet::testing::gradient_error;
using msfnet::testing::random_double;

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Direct loop implementation of the gate: pooled maps, zero-padded 7x7 correlation, sigmoid.
torch::Tensor gate_oracle(const torch::Tensor& x, const SpatialGateParams& p, bool subtract_min) {
    const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    auto xa = x.accessor<double, 4>();
    auto wa = p.weight.accessor<double, 4>();
    const double bias = p.bias.item<double>();
    auto mx = torch::zeros({b, h, w}, torch::kFloat64);
    auto mn = torch::zeros({b, h, w}, torch::kFloat64);
    auto av = torch::zeros({b, h, w}, torch::kFloat64);
    auto mxa = mx.accessor<double, 3>(), mna = mn.accessor<double, 3>(), ava = av.accessor<double, 3>();
    for (int64_t n = 0; n < b; ++n)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                double hi = xa[n][0][i][j], lo = hi, sum = 0.0;
                for (int64_t k = 0; k < c; ++k) {
                    hi = std::max(hi, xa[n][k][i][j]);
                    lo = std::min(lo, xa[n][k][i][j]);
                    sum += xa[n][k][i][j];
                }
                mxa[n][i][j] = hi;
                mna[n][i][j] = lo;
                ava[n][i][j] = sum / static_cast<double>(c);
            }
    auto out = torch::zeros({b, 1, h, w}, torch::kFloat64);
    auto oa = out.accessor<double, 4>();
    for (int64_t n = 0; n < b; ++n)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                double acc = bias;
                for (int64_t di = -3; di <= 3; ++di)
                    for (int64_t dj = -3; dj <= 3; ++dj) {
                        const auto ii = i + di, jj = j + dj;
                        if (ii < 0 || jj < 0 || ii >= h || jj >= w) continue;
                        const double shift = subtract_min ? mna[n][ii][jj] : 0.0;
                        acc += wa[0][0][di + 3][dj + 3] * (ava[n][ii][jj] - shift);
                        acc += wa[0][1][di + 3][dj + 3] * (mxa[n][ii][jj] - shift);
                    }
                oa[n][0][i][j] = sigmoid(acc);
            }
    return out;
}

} // namespace

TEST(ChannelPool, ConstantInput) {
    auto x = torch::full({1, 4, 3, 3}, 2.5, torch::kFloat64);
    auto p = channel_pool(x);
    EXPECT_TRUE(torch::equal(p.x_max, torch::full({1, 1, 3, 3}, 2.5, torch::kFloat64)));
    EXPECT_TRUE(torch::equal(p.x_min, p.x_max));
    EXPECT_TRUE(torch::allclose(p.x_avg, p.x_max, 0, 1e-15));
}

TEST(ChannelPool, TwoChannelPixel) {
    auto x = torch::tensor({1.0, 3.0}, torch::kFloat64).view({1, 2, 1, 1});
    auto p = channel_pool(x);
    EXPECT_DOUBLE_EQ(p.x_max.item<double>(), 3.0);
    EXPECT_DOUBLE_EQ(p.x_min.item<double>(), 1.0);
    EXPECT_DOUBLE_EQ(p.x_avg.item<double>(), 2.0);
}

TEST(ChannelPool, OrderingHoldsOnRandomInputs) {
    for (uint64_t s = 0; s < 20; ++s) {
        auto p = channel_pool(random_double({2, 5, 6, 7}, s, -3, 3));
        EXPECT_TRUE((p.x_min <= p.x_avg).all().item<bool>());
        EXPECT_TRUE((p.x_avg <= p.x_max).all().item<bool>());
    }
}

TEST(ChannelPool, RejectsBadShapes) {
    EXPECT_THROW(channel_pool(torch::zeros({1, 0, 3, 3})), InvalidInputError);
    EXPECT_THROW(channel_pool(torch::zeros({3, 3})), InvalidShapeError);
}

TEST(Eda, ZeroParamsHalveInput) {
    auto params = SpatialGateParams::zeros();
    for (uint64_t s = 0; s < 10; ++s) {
        auto x = random_double({2, 3, 5, 4}, 100 + s, -5, 5);
        EXPECT_TRUE(torch::equal(eda_forward(x, params), 0.5 * x));
    }
}

TEST(Eda, IdenticalChannelsGiveSigmoidOfBias) {
    auto params = SpatialGateParams::random(at::detail::createCPUGenerator(3));
    auto plane = random_double({1, 1, 6, 6}, 4);
    auto x = plane.expand({1, 4, 6, 6}).contiguous();
    auto expected = sigmoid(params.bias.item<double>()) * x;
    EXPECT_TRUE(torch::allclose(eda_forward(x, params), expected, 0, 1e-14));
}

TEST(Eda, MatchesLoopOracle) {
    for (uint64_t s = 0; s < 5; ++s) {
        auto params = SpatialGateParams::random(at::detail::createCPUGenerator(10 + s));
        auto x = random_double({2, 3, 9, 8}, 20 + s, -2, 2);
        EXPECT_TRUE(torch::allclose(eda_gate(x, params), gate_oracle(x, params, true), 0, 1e-12));
        EXPECT_TRUE(torch::allclose(cbam_s_gate(x, params), gate_oracle(x, params, false), 0, 1e-12));
    }
}

TEST(Eda, OutputBoundedByInput) {
    for (uint64_t s = 0; s < 10; ++s) {
        auto params = SpatialGateParams::random(at::detail::createCPUGenerator(s));
        auto x = random_double({1, 6, 8, 8}, 50 + s, -4, 4);
        auto y = eda_forward(x, params);
        EXPECT_TRUE((y.abs() <= x.abs()).all().item<bool>());
        auto gate = eda_gate(x, params);
        EXPECT_TRUE((gate > 0).all().item<bool>());
        EXPECT_TRUE((gate < 1).all().item<bool>());
    }
}

TEST(Eda, ShapePreserved) {
    auto x = torch::randn({2, 16, 10, 10}, torch::kFloat64);
    EXPECT_EQ(eda_forward(x, SpatialGateParams::zeros()).sizes(), x.sizes());
}

TEST(Eda, InvariantToChannelOffsetThroughGate) {
    // Adding a constant to every channel shifts avg, max and min equally; the gate is unchanged.
    auto params = SpatialGateParams::random(at::detail::createCPUGenerator(8));
    auto x = random_double({1, 4, 7, 7}, 9);
    EXPECT_TRUE(torch::allclose(eda_gate(x, params), eda_gate(x + 3.0, params), 0, 1e-12));
}

TEST(Eda, EqualsCbamWhenMinimumIsZero) {
    auto params = SpatialGateParams::random(at::detail::createCPUGenerator(12));
    auto x = random_double({1, 4, 6, 6}, 13, 0.0, 2.0);
    x.index_put_({torch::indexing::Slice(), 0}, 0.0);
    EXPECT_TRUE(torch::allclose(eda_forward(x, params), cbam_s_forward(x, params), 0, 1e-14));
}

TEST(CbamS, ZeroParamsHalveInput) {
    auto x = random_double({1, 3, 4, 4}, 14);
    EXPECT_TRUE(torch::equal(cbam_s_forward(x, SpatialGateParams::zeros()), 0.5 * x));
}

TEST(CbamS, ConstantInputWithZeroWeights) {
    auto params = SpatialGateParams::zeros();
    params.bias.fill_(0.7);
    auto x = torch::full({1, 3, 5, 5}, 2.0, torch::kFloat64);
    EXPECT_TRUE(torch::allclose(cbam_s_forward(x, params), sigmoid(0.7) * x, 0, 1e-15));
}

TEST(GateParams, Validation) {
    SpatialGateParams bad{torch::zeros({1, 2, 5, 5}, torch::kFloat64), torch::zeros({1}, torch::kFloat64)};
    EXPECT_THROW(eda_forward(torch::zeros({1, 2, 4, 4}, torch::kFloat64), bad), InvalidShapeError);
    SpatialGateParams bad_bias{torch::zeros({1, 2, 7, 7}, torch::kFloat64), torch::zeros({2}, torch::kFloat64)};
    EXPECT_THROW(bad_bias.validate(), InvalidShapeError);
}

TEST(Eda, GradientMatchesFiniteDifference) {
    auto params = SpatialGateParams::random(at::detail::createCPUGenerator(21));
    auto x = random_double({1, 3, 6, 6}, 22).requires_grad_(true);
    auto probe = random_double({1, 3, 6, 6}, 23);
    const auto f = [&] { return (eda_forward(x, params) * probe).sum(); };
    EXPECT_LT(gradient_error(f, x, 1e-6, 108), 1e-4);

    params.weight.requires_grad_(true);
    params.bias.requires_grad_(true);
    EXPECT_LT(gradient_error(f, params.weight, 1e-6, 98), 1e-4);
    EXPECT_LT(gradient_error(f, params.bias), 1e-4);
}

TEST(CbamS, GradientMatchesFiniteDifference) {
    auto params = SpatialGateParams::random(at::detail::createCPUGenerator(31));
    params.weight.requires_grad_(true);
    auto x = random_double({2, 2, 5, 5}, 32).requires_grad_(true);
    const auto f = [&] { return cbam_s_forward(x, params).pow(2).sum(); };
    EXPECT_LT(gradient_error(f, x), 1e-4);
    EXPECT_LT(gradient_error(f, params.weight), 1e-4);
}

TEST(SpatialAttentionModule, MatchesFunctionalForm) {
    for (auto kind : {AttentionKind::eda, AttentionKind::cbam_s}) {
        SpatialAttention block(kind);
        block->to(torch::kFloat64);
        auto x = random_double({2, 5, 6, 6}, 40);
        auto p = block->params();
        auto expected = kind == AttentionKind::eda ? eda_forward(x, p) : cbam_s_forward(x, p);
        EXPECT_TRUE(torch::allclose(block->forward(x), expected, 0, 1e-14));
    }
    EXPECT_THROW(SpatialAttention(AttentionKind::none), ConfigError);
}

TEST(AttentionKindNames, RoundTrip) {
    for (auto kind : {AttentionKind::none, AttentionKind::cbam_s, AttentionKind::eda}) {
        EXPECT_EQ(attention_kind_from_string(to_string(kind)), kind);
    }
    EXPECT_THROW(attention_kind_from_string("channel"), ConfigError);
}
