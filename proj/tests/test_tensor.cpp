#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "mrf/checkpoint.hpp"
#include "mrf/errors.hpp"
#include "mrf/ops.hpp"
#include "support.hpp"

using namespace mrf;
using mrf::test::max_fd_error;
using mrf::test::random_tensor;

TEST(Matmul, IdentityLeavesOperandUnchanged) {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor b({2, 2}, {3, 4, 5, 6});
    Tensor c = matmul(eye, b);
    EXPECT_EQ(c.shape(), (Shape{2, 2}));
    EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{3, 4, 5, 6}));
}

TEST(Matmul, RowTimesColumn) {
    Tensor c = matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4}));
    EXPECT_EQ(c.shape(), (Shape{1, 1}));
    EXPECT_DOUBLE_EQ(c.item(), 11.0);
}

TEST(Matmul, GradientOfSumIsRowSumsOfB) {
    Tensor a = random_tensor({3, 4}, 1, true);
    Tensor b = random_tensor({4, 2}, 2, true);
    sum(matmul(a, b)).backward();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            EXPECT_NEAR(a.grad()[i * 4 + j], b.at({j, 0}) + b.at({j, 1}), 1e-14);
    a.zero_grad();
    b.zero_grad();
    EXPECT_LE(max_fd_error([&] { return sum(matmul(a, b)); }, {a, b}), 1e-6);
}

TEST(Matmul, BatchedAndBroadcastGradients) {
    Tensor a = random_tensor({2, 3, 3, 4}, 3, true);
    Tensor b = random_tensor({4, 5}, 4, true);
    Tensor w = random_tensor({2, 3, 3, 5}, 5);
    EXPECT_LE(max_fd_error([&] { return sum(mul(matmul(a, b), w)); }, {a, b}), 1e-6);

    Tensor c = random_tensor({2, 4, 2}, 6, true);
    Tensor d = random_tensor({2, 2, 3}, 7, true);
    Tensor w2 = random_tensor({2, 4, 3}, 8);
    EXPECT_LE(max_fd_error([&] { return sum(mul(matmul(c, d), w2)); }, {c, d}), 1e-6);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    try {
        matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(4, 2)"), std::string::npos) << msg;
    }
}

TEST(Softmax, UniformOnEqualInputs) {
    Tensor s = softmax(Tensor({3}, {0, 0, 0}), 0);
    for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LogTwoGivesTwoThirds) {
    Tensor s = softmax(Tensor({2}, {std::log(2.0), 0.0}), 0);
    EXPECT_NEAR(s.data()[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(s.data()[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeInputsDoNotOverflow) {
    Tensor s = softmax(Tensor({2}, {1000, 1000}), 0);
    EXPECT_DOUBLE_EQ(s.data()[0], 0.5);
    EXPECT_DOUBLE_EQ(s.data()[1], 0.5);
}

TEST(Softmax, NanInputIsNumericError) {
    EXPECT_THROW(softmax(Tensor({2}, {std::numeric_limits<double>::quiet_NaN(), 0.0}), 0), NumericError);
}

TEST(Softmax, SumsToOneAlongEachAxis) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Tensor x = random_tensor({3, 4, 5}, seed, false, -50.0, 50.0);
        for (std::size_t axis = 0; axis < 3; ++axis) {
            Tensor s = softmax(x, axis);
            Tensor totals = sum_axis(s, axis);
            for (double t : totals.data()) EXPECT_NEAR(t, 1.0, 1e-12);
            for (double v : s.data()) EXPECT_GE(v, 0.0);
        }
    }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
    Tensor x = random_tensor({2, 5}, 11, true);
    Tensor w = random_tensor({2, 5}, 12);
    EXPECT_LE(max_fd_error([&] { return sum(mul(softmax(x, 1), w)); }, {x}), 1e-6);
    EXPECT_LE(max_fd_error([&] { return sum(mul(softmax(x, 0), w)); }, {x}), 1e-6);
}

TEST(LayerNorm, ConstantRowMapsToZero) {
    Tensor y = layer_norm(Tensor::full({2, 4}, 3.5), Tensor::full({4}, 1.0), Tensor::zeros({4}), 1e-5);
    for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(LayerNorm, TwoPointAnalytic) {
    Tensor y = layer_norm(Tensor({2}, {1, 3}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-14);
    EXPECT_NEAR(y.data()[0], -1.0, 1e-12);
    EXPECT_NEAR(y.data()[1], 1.0, 1e-12);
}

TEST(LayerNorm, StandardizesArbitraryRows) {
    Tensor x = random_tensor({6, 16}, 21, false, -10.0, 10.0);
    Tensor y = layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}), 1e-5);
    for (std::size_t r = 0; r < 6; ++r) {
        double m = 0.0, v = 0.0;
        for (std::size_t c = 0; c < 16; ++c) m += y.at({r, c});
        m /= 16.0;
        for (std::size_t c = 0; c < 16; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m);
        v /= 16.0;
        EXPECT_LE(std::abs(m), 1e-12);
        EXPECT_LE(std::abs(v - 1.0), 1e-6);
    }
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
    Tensor x = random_tensor({3, 6}, 31, true);
    Tensor g = random_tensor({6}, 32, true);
    Tensor b = random_tensor({6}, 33, true);
    Tensor w = random_tensor({3, 6}, 34);
    EXPECT_LE(max_fd_error([&] { return sum(mul(layer_norm(x, g, b, 1e-5), w)); }, {x, g, b}), 1e-6);
}

TEST(Backward, SumGivesOnes) {
    Tensor x({3}, {4, 5, 6}, true);
    sum(x).backward();
    for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, SumOfSquares) {
    Tensor x({3}, {1, 2, 3}, true);
    sum(mul(x, x)).backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
    EXPECT_DOUBLE_EQ(x.grad()[2], 6.0);
}

TEST(Backward, TwoCallsAccumulate) {
    Tensor x({2}, {1, -2}, true);
    Tensor loss = sum(mul(x, x));
    loss.backward();
    loss.backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], -8.0);
    x.zero_grad();
    loss.backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
}

TEST(Backward, NonScalarLossIsContractError) {
    Tensor x({2}, {1, 2}, true);
    EXPECT_THROW(scale(x, 2.0).backward(), ContractError);
}

TEST(Backward, UnreachableLeafHasZeroGradient) {
    Tensor x({2}, {1, 2}, true);
    Tensor unused({2}, {3, 4}, true);
    sum(x).backward();
    for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
    Tensor x({2}, {1, 2}, true);
    Tensor y;
    {
        NoGradGuard guard;
        y = mul(x, x);
    }
    EXPECT_FALSE(y.requires_grad());
}

TEST(Primitives, ElementwiseGradients) {
    Tensor a = random_tensor({2, 3}, 41, true, 0.5, 2.0);
    Tensor b = random_tensor({2, 3}, 42, true, 0.5, 2.0);
    Tensor w = random_tensor({2, 3}, 43);
    EXPECT_LE(max_fd_error([&] { return sum(mul(add(a, b), w)); }, {a, b}), 1e-6);
    EXPECT_LE(max_fd_error([&] { return sum(mul(sub(a, b), w)); }, {a, b}), 1e-6);
    EXPECT_LE(max_fd_error([&] { return sum(mul(div(a, b), w)); }, {a, b}), 1e-6);
    EXPECT_LE(max_fd_error([&] { return sum(mul(sqrt(a), w)); }, {a}), 1e-6);
    EXPECT_LE(max_fd_error([&] { return sum(mul(gelu(sub(a, b)), w)); }, {a, b}), 1e-6);
    EXPECT_LE(max_fd_error([&] { return sum(mul(add_scalar(scale(a, -3.0), 2.0), w)); }, {a}), 1e-6);
}

TEST(Primitives, ReductionGradients) {
    Tensor x = random_tensor({3, 4, 2}, 51, true);
    Tensor w = random_tensor({3, 1, 2}, 52);
    EXPECT_LE(max_fd_error([&] { return sum(mul(sum_axis(x, 1), w)); }, {x}), 1e-6);
    EXPECT_LE(max_fd_error([&] { return sum(mul(mean_axis(x, 1), w)); }, {x}), 1e-6);
    EXPECT_LE(max_fd_error([&] { return sum(mul(var_axis(x, 1), w)); }, {x}), 1e-6);
    EXPECT_LE(max_fd_error([&] { return mean(mul(x, x)); }, {x}), 1e-6);
}

TEST(Primitives, VarianceIsPopulationVariance) {
    Tensor v = var_axis(Tensor({1, 3}, {1, 2, 3}), 1);
    EXPECT_NEAR(v.item(), 2.0 / 3.0, 1e-15);
}

TEST(Primitives, LayoutGradients) {
    Tensor x = random_tensor({2, 3, 4}, 61, true);
    Tensor w = random_tensor({4, 2, 3}, 62);
    EXPECT_LE(max_fd_error([&] { return sum(mul(permute(x, {2, 0, 1}), w)); }, {x}), 1e-6);
    Tensor w2 = random_tensor({6, 4}, 63);
    EXPECT_LE(max_fd_error([&] { return sum(mul(reshape(x, {6, 4}), w2)); }, {x}), 1e-6);
    Tensor y = random_tensor({2, 1, 4}, 64, true);
    Tensor w3 = random_tensor({2, 4, 4}, 65);
    EXPECT_LE(max_fd_error([&] { return sum(mul(concat({x, y}, 1), w3)); }, {x, y}), 1e-6);
    Tensor w4 = random_tensor({2, 2, 4}, 66);
    EXPECT_LE(max_fd_error([&] { return sum(mul(slice(x, 1, 1, 2), w4)); }, {x}), 1e-6);
    Tensor w5 = random_tensor({2, 5, 4}, 67);
    EXPECT_LE(max_fd_error([&] { return sum(mul(index_select(x, 1, {0, 2, 2, 1, 2}), w5)); }, {x}), 1e-6);
    Tensor b = random_tensor({1, 4}, 68, true);
    Tensor w6 = random_tensor({2, 3, 4}, 69);
    EXPECT_LE(max_fd_error([&] { return sum(mul(broadcast_to(b, {2, 3, 4}), w6)); }, {b}), 1e-6);
    Tensor w7 = random_tensor({2, 4, 3}, 70);
    EXPECT_LE(max_fd_error([&] { return sum(mul(transpose(x, 1, 2), w7)); }, {x}), 1e-6);
}

TEST(Primitives, SliceAndConcatValues) {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor s = slice(x, 1, 1, 2);
    EXPECT_EQ(std::vector<double>(s.data().begin(), s.data().end()), (std::vector<double>{2, 3, 5, 6}));
    Tensor c = concat({x, s}, 1);
    EXPECT_EQ(c.shape(), (Shape{2, 5}));
    EXPECT_DOUBLE_EQ(c.at({1, 4}), 6.0);
}

TEST(Dropout, EvalIsIdentityAndTrainIsInverted) {
    Tensor x = Tensor::full({1000}, 2.0);
    Tensor same = dropout(x, 0.5, false, nullptr);
    for (double v : same.data()) EXPECT_EQ(v, 2.0);
    std::mt19937_64 rng(7);
    Tensor d = dropout(x, 0.25, true, &rng);
    std::size_t zeros = 0;
    for (double v : d.data()) {
        if (v == 0.0)
            ++zeros;
        else
            EXPECT_DOUBLE_EQ(v, 2.0 / 0.75);
    }
    EXPECT_GT(zeros, 150u);
    EXPECT_LT(zeros, 350u);
}

TEST(Dropout, SameSeedSameMask) {
    Tensor x = random_tensor({64}, 81);
    std::mt19937_64 r1(5), r2(5);
    Tensor a = dropout(x, 0.3, true, &r1);
    Tensor b = dropout(x, 0.3, true, &r2);
    EXPECT_EQ(std::vector<double>(a.data().begin(), a.data().end()),
              std::vector<double>(b.data().begin(), b.data().end()));
}

TEST(Tensor, RejectsBadShapes) {
    EXPECT_THROW(Tensor({2, 0}, {}), ShapeError);
    EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
}

TEST(ParameterStore, NamesAreUnique) {
    ParameterStore store;
    store.add("w", Tensor::zeros({2}));
    EXPECT_THROW(store.add("w", Tensor::zeros({2})), ContractError);
    EXPECT_TRUE(store.get("w").requires_grad());
    EXPECT_EQ(store.scalar_count(), 2u);
}

namespace {
ParameterStore sample_store() {
    ParameterStore store;
    store.add("a", Tensor({2, 2}, {1.0 / 3.0, -0.0, 1e-300, -7.25}));
    store.add("block0.b", Tensor({3}, {std::nextafter(1.0, 2.0), 2.0, 3.0}));
    return store;
}
}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
    ParameterStore store = sample_store();
    ParameterStore back = deserialize_parameters(serialize_parameters(store));
    ASSERT_EQ(back.size(), store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        EXPECT_EQ(back.items()[i].name, store.items()[i].name);
        EXPECT_EQ(back.items()[i].tensor.shape(), store.items()[i].tensor.shape());
        for (std::size_t j = 0; j < store.items()[i].tensor.numel(); ++j)
            EXPECT_EQ(std::signbit(back.items()[i].tensor.data()[j]), std::signbit(store.items()[i].tensor.data()[j]));
        EXPECT_EQ(std::vector<double>(back.items()[i].tensor.data().begin(), back.items()[i].tensor.data().end()),
                  std::vector<double>(store.items()[i].tensor.data().begin(), store.items()[i].tensor.data().end()));
    }
}

TEST(Checkpoint, CorruptionIsDetected) {
    const std::string text = serialize_parameters(sample_store());
    std::string flipped = text;
    flipped[text.find("param") + 7] = 'x';
    EXPECT_THROW(deserialize_parameters(flipped), CorruptArtifactError);
    EXPECT_THROW(deserialize_parameters(text.substr(0, text.size() / 2)), CorruptArtifactError);
    EXPECT_THROW(deserialize_parameters(""), CorruptArtifactError);
}

TEST(Checkpoint, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "mrf_test_checkpoint.mrf";
    save_checkpoint(path, sample_store());
    ParameterStore back = load_checkpoint(path);
    EXPECT_EQ(back.get("a").at({0, 0}), 1.0 / 3.0);
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(path), CorruptArtifactError);
}

TEST(Determinism, IdenticalInputsGiveIdenticalOutputs) {
    auto run = [] {
        Tensor a = random_tensor({4, 8}, 91);
        Tensor b = random_tensor({8, 8}, 92);
        return softmax(layer_norm(matmul(a, b), Tensor::full({8}, 1.0), Tensor::zeros({8}), 1e-5), 1);
    };
    Tensor r1 = run(), r2 = run();
    EXPECT_EQ(std::vector<double>(r1.data().begin(), r1.data().end()),
              std::vector<double>(r2.data().begin(), r2.data().end()));
}
