#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fundus/error.hpp"
#include "fundus/tensor.hpp"

using namespace fundus;

namespace {

Tensor ramp(Shape shape) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
    return t;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor t(shape);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

// Direct evaluation of the zero-padded cross-correlation.
Tensor reference_conv(const Tensor& in, const Tensor& k, const Tensor& b, std::size_t stride, std::size_t pad) {
    const long h = static_cast<long>(in.dim(0)), w = static_cast<long>(in.dim(1));
    const long kh = static_cast<long>(k.dim(0)), kw = static_cast<long>(k.dim(1));
    const std::size_t cin = k.dim(2), cout = k.dim(3);
    const long p = static_cast<long>(pad), s = static_cast<long>(stride);
    const long oh = (h + 2 * p - kh) / s + 1, ow = (w + 2 * p - kw) / s + 1;
    Tensor out({static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), cout});
    for (long oy = 0; oy < oh; ++oy)
        for (long ox = 0; ox < ow; ++ox)
            for (std::size_t co = 0; co < cout; ++co) {
                double acc = b[co];
                for (long dy = 0; dy < kh; ++dy)
                    for (long dx = 0; dx < kw; ++dx) {
                        const long y = oy * s + dy - p, x = ox * s + dx - p;
                        if (y < 0 || x < 0 || y >= h || x >= w) continue;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            acc += in.at(y, x, ci) *
                                   k[((static_cast<std::size_t>(dy) * k.dim(1) + static_cast<std::size_t>(dx)) * cin + ci) * cout + co];
                        }
                    }
                out.at(oy, ox, co) = acc;
            }
    return out;
}

}  // namespace

TEST(Tensor, RejectsMismatchedData) {
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
    EXPECT_THROW(Tensor({2, 0}), ShapeError);
}

TEST(Conv2d, IdentityKernel) {
    const Tensor out = conv2d(Tensor({1, 1, 1}, {2.0}), Tensor({1, 1, 1, 1}, {1.0}), Tensor::vector({0.0}), 1, 0);
    EXPECT_EQ(out, Tensor({1, 1, 1}, {2.0}));
}

TEST(Conv2d, SumFilter) {
    const Tensor out = conv2d(Tensor({3, 3, 1}, 1.0), Tensor({3, 3, 1, 1}, 1.0), Tensor::vector({0.0}), 1, 0);
    EXPECT_EQ(out, Tensor({1, 1, 1}, {9.0}));
}

TEST(Conv2d, AveragingKernelStrideTwo) {
    const Tensor out = conv2d(ramp({4, 4, 1}), Tensor({2, 2, 1, 1}, 0.25), Tensor::vector({0.0}), 2, 0);
    EXPECT_EQ(out, Tensor({2, 2, 1}, {2.5, 4.5, 10.5, 12.5}));
}

TEST(Conv2d, MatchesDirectSumWithPaddingAndStride) {
    std::mt19937_64 rng(11);
    for (std::size_t stride : {1u, 2u}) {
        for (std::size_t pad : {0u, 1u, 2u}) {
            const Tensor in = random_tensor({7, 6, 3}, rng);
            const Tensor k = random_tensor({3, 3, 3, 4}, rng);
            const Tensor b = random_tensor({4}, rng);
            const Tensor got = conv2d(in, k, b, stride, pad);
            const Tensor want = reference_conv(in, k, b, stride, pad);
            ASSERT_EQ(got.shape(), want.shape());
            for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
        }
    }
}

TEST(Conv2d, ShapeErrors) {
    EXPECT_THROW(conv2d(Tensor({3, 3, 2}), Tensor({3, 3, 1, 1}), Tensor({1}), 1, 0), ShapeError);
    EXPECT_THROW(conv2d(Tensor({3, 3, 1}), Tensor({3, 3, 1, 1}), Tensor({1}), 0, 0), ArgumentError);
}

TEST(Relu, Examples) {
    EXPECT_EQ(relu(Tensor::vector({-1, 0, 2})), Tensor::vector({0, 0, 2}));
    EXPECT_EQ(relu(Tensor({3, 2})), Tensor({3, 2}));
    EXPECT_EQ(relu(Tensor::vector({-0.5, 3.25})), Tensor::vector({0, 3.25}));
}

TEST(MaxPool2, SingleWindow) {
    const PoolResult r = max_pool2(Tensor({2, 2, 1}, {1, 2, 3, 4}));
    EXPECT_EQ(r.output, Tensor({1, 1, 1}, {4}));
    ASSERT_EQ(r.argmax.size(), 1u);
    EXPECT_EQ(r.argmax[0], 3u);
}

TEST(MaxPool2, ConstantTiesGoToFirstIndex) {
    const PoolResult r = max_pool2(Tensor({4, 4, 2}, 1.5));
    EXPECT_EQ(r.output, Tensor({2, 2, 2}, 1.5));
    // Flat index of the window's top-left cell for each (y, x, c).
    const std::vector<std::size_t> want = {0, 1, 4, 5, 16, 17, 20, 21};
    EXPECT_EQ(r.argmax, want);
}

TEST(MaxPool2, RaggedEdge) {
    const PoolResult r = max_pool2(ramp({3, 3, 1}));
    EXPECT_EQ(r.output, Tensor({2, 2, 1}, {4, 5, 7, 8}));
    EXPECT_EQ(r.argmax, (std::vector<std::size_t>{4, 5, 7, 8}));
}

TEST(Dense, Examples) {
    EXPECT_EQ(dense(Tensor::vector({1, 0}), Tensor({2, 2}, {1, 0, 0, 1}), Tensor::vector({0, 0})),
              Tensor::vector({1, 0}));
    EXPECT_EQ(dense(Tensor::vector({1, 1}), Tensor({2, 2}, {2, 0, 0, 3}), Tensor::vector({1, 1})),
              Tensor::vector({3, 4}));
    EXPECT_EQ(dense(Tensor::vector({0, 0, 0}), Tensor({3, 2}, 7.0), Tensor::vector({-1, 2})),
              Tensor::vector({-1, 2}));
}

TEST(GlobalAvgPool, Examples) {
    EXPECT_EQ(global_avg_pool(Tensor({3, 5, 2}, 5.0)), Tensor::vector({5, 5}));
    EXPECT_EQ(global_avg_pool(Tensor({2, 2, 1}, {1, 2, 3, 4})), Tensor::vector({2.5}));
    EXPECT_EQ(global_avg_pool(Tensor({2, 2, 2}, {0, 1, 0, 1, 0, 1, 4, 1})), Tensor::vector({1.0, 1.0}));
}

TEST(Softmax, Examples) {
    EXPECT_EQ(softmax(Tensor::vector({0, 0, 0, 0})), Tensor::vector({0.25, 0.25, 0.25, 0.25}));
    EXPECT_EQ(softmax(Tensor::vector({1000, 1000})), Tensor::vector({0.5, 0.5}));
    const Tensor p = softmax(Tensor::vector({0, std::log(3.0)}));
    EXPECT_NEAR(p[0], 0.25, 1e-15);
    EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(BilinearResize, Examples) {
    std::mt19937_64 rng(3);
    const Tensor m = random_tensor({5, 4, 2}, rng);
    EXPECT_EQ(bilinear_resize(m, 5, 4), m);
    EXPECT_EQ(bilinear_resize(Tensor({1, 1}, {7}), 4, 4), Tensor({4, 4}, 7.0));
    EXPECT_EQ(bilinear_resize(Tensor({2, 1}, {0, 1}), 4, 1), Tensor({4, 1}, {0, 0.25, 0.75, 1}));
}

TEST(NearestResize, KeepsBinaryValues) {
    const Tensor m({3, 3}, {0, 1, 0, 1, 1, 0, 0, 0, 1});
    const Tensor r = nearest_resize(m, 7, 5);
    for (double v : r.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(MinmaxNormalize, Examples) {
    EXPECT_EQ(minmax_normalize(Tensor::vector({2, 4, 6})), Tensor::vector({0, 0.5, 1}));
    EXPECT_EQ(minmax_normalize(Tensor({2, 3}, 4.0)), Tensor({2, 3}, 0.0));
    EXPECT_EQ(minmax_normalize(Tensor::vector({-1, 0, 3})), Tensor::vector({0, 0.25, 1}));
}

TEST(Argmax, TiesToLowestIndex) {
    const std::vector<double> v = {1, 3, 3, 2};
    EXPECT_EQ(argmax(v), 1u);
}
