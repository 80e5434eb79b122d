#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "steraser/eraser_net.hpp"
#include "steraser/gradcheck.hpp"
#include "test_util.hpp"

using namespace ste;
using ste::testing::random_tensor;

namespace {

const EraserModel& shared_model() {
  static const EraserModel m = init_model(42);
  return m;
}

std::string saved_bytes(const EraserModel& m) {
  std::ostringstream os(std::ios::binary);
  save_model(m, os);
  return os.str();
}

EraserModel load_bytes(const std::string& s) {
  std::istringstream is(s, std::ios::binary);
  return load_model(is);
}

void put_u32_at(std::string& s, std::size_t pos, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s[pos + static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

}  // namespace

TEST(InitModel, ArchitectureAndChannelPlan) {
  const auto& m = shared_model();
  ASSERT_EQ(m.layer_count(), 8u);
  const std::size_t conv_plan[4][2] = {{32, 3}, {64, 32}, {128, 64}, {256, 128}};
  const std::size_t deconv_plan[4][2] = {{128, 256}, {64, 128}, {32, 64}, {3, 32}};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(m.conv[i].out_channels, conv_plan[i][0]);
    EXPECT_EQ(m.conv[i].in_channels, conv_plan[i][1]);
    EXPECT_EQ(m.deconv[i].out_channels, deconv_plan[i][0]);
    EXPECT_EQ(m.deconv[i].in_channels, deconv_plan[i][1]);
  }
}

TEST(InitModel, DeterministicForSeed) {
  EXPECT_EQ(init_model(42), shared_model());
  EXPECT_NE(init_model(43).conv[0].weights, shared_model().conv[0].weights);
}

TEST(InitModel, WeightsWithinGlorotBoundAndBiasesZero) {
  EXPECT_NEAR(init_bound(3, 32), std::sqrt(6.0 / (48.0 + 512.0)), 1e-15);
  EXPECT_NEAR(init_bound(3, 32), 0.1035, 1e-4);
  const auto& m = shared_model();
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    const auto& p = m.layer(i);
    const double s = init_bound(p.in_channels, p.out_channels);
    double max_abs = 0;
    for (double w : p.weights) {
      EXPECT_LE(std::abs(w), s);
      max_abs = std::max(max_abs, std::abs(w));
    }
    EXPECT_GT(max_abs, 0.9 * s);  // the whole range is used
    for (double b : p.bias) EXPECT_EQ(b, 0.0);
  }
}

TEST(Forward, ShapesOnTape) {
  Tape tape;
  const auto out = forward(shared_model(), random_tensor({3, 64, 64}, 1, 0, 1), &tape);
  EXPECT_EQ(out.shape(), (Shape{3, 64, 64}));
  EXPECT_EQ(tape.spatial_sizes(), (std::vector<std::size_t>{32, 16, 8, 4, 8, 16, 32, 64}));
}

TEST(Forward, SkipPartnersHaveEqualShapes) {
  Tape tape;
  forward(shared_model(), Tensor(3, 64, 64, 0.5), &tape);
  ASSERT_EQ(tape.merged.size(), 3u);
  // m_k pairs deconv_k with conv_{4-k}
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& partner = tape.encoder[3 - k];
    EXPECT_TRUE(tape.merged[k].same_geometry(partner)) << k;
  }
  EXPECT_EQ(tape.merged[0].channels(), 128u);
  EXPECT_EQ(tape.merged[0].height(), 8u);
  EXPECT_EQ(tape.merged[2].channels(), 32u);
  EXPECT_EQ(tape.merged[2].height(), 32u);
}

TEST(Forward, ZeroNetworkGivesZeros) {
  const auto m = make_model<double>(kEraserChannelPlan, kPatchSize);
  const auto out = forward(m, random_tensor({3, 64, 64}, 2, 0, 1));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, RejectsWrongShape) {
  EXPECT_THROW(forward(shared_model(), Tensor(3, 32, 32)), ContractError);
  EXPECT_THROW(forward(shared_model(), Tensor(1, 64, 64)), ContractError);
}

TEST(Forward, BatchEqualsPerSample) {
  std::vector<Tensor> xs{random_tensor({3, 64, 64}, 3, 0, 1), random_tensor({3, 64, 64}, 4, 0, 1)};
  const auto batched = forward(shared_model(), Activations::stack(xs));
  for (std::size_t n = 0; n < 2; ++n) {
    const auto single = forward(shared_model(), xs[n]);
    const auto b = batched.sample(n);
    for (std::size_t i = 0; i < single.size(); ++i) EXPECT_NEAR(b[i], single[i], 1e-12);
  }
}

TEST(TrainStep, ZeroLearningRateLeavesParametersUntouched) {
  EraserModel m = init_model(5);
  const EraserModel before = m;
  std::vector<Tensor> x{random_tensor({3, 64, 64}, 6, 0, 1)}, y{random_tensor({3, 64, 64}, 7, 0, 1)};
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  const double loss = train_step(m, TrainBatch::from(x, y), cfg);
  EXPECT_GT(loss, 0.0);
  EXPECT_EQ(m, before);
}

TEST(TrainStep, ReturnsPreUpdateLossAndChangesParameters) {
  EraserModel m = init_model(5);
  const EraserModel before = m;
  std::vector<Tensor> x{random_tensor({3, 64, 64}, 6, 0, 1)}, y{random_tensor({3, 64, 64}, 7, 0, 1)};
  const double expected = mse_loss(forward(m, x[0]), y[0]).first;
  const double loss = train_step(m, TrainBatch::from(x, y), TrainConfig{});
  EXPECT_DOUBLE_EQ(loss, expected);
  EXPECT_NE(m, before);
  EXPECT_LT(mse_loss(forward(m, x[0]), y[0]).first, expected);
}

TEST(TrainStep, RejectsOutOfRangeBatch) {
  EraserModel m = init_model(5);
  std::vector<Tensor> x{Tensor(3, 64, 64, 1.5)}, y{Tensor(3, 64, 64)};
  EXPECT_THROW(train_step(m, TrainBatch::from(x, y), TrainConfig{}), ContractError);
}

TEST(TrainStep, NonFiniteLossNamesStep) {
  EraserModel m = init_model(5);
  m.deconv[3].bias[0] = std::numeric_limits<double>::infinity();
  std::vector<Tensor> x{Tensor(3, 64, 64, 0.5)}, y{Tensor(3, 64, 64)};
  try {
    train_step(m, TrainBatch::from(x, y), TrainConfig{}, 17);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 17"), std::string::npos);
  }
}

TEST(Backward, ReducedNetworkMatchesFiniteDifferences) {
  // seed 24 puts a pre-activation within one step of zero
  for (std::uint64_t seed = 1; seed <= 30; ++seed)
    EXPECT_LT(grad_check(LayerKind::kNetwork, {3, 8, 8}, 0, seed), 1e-4) << seed;
}

TEST(Persistence, RoundTripIsBitExactAtFloatPrecision) {
  const EraserModel m = quantized(init_model(9));
  const std::string bytes = saved_bytes(m);
  EXPECT_EQ(bytes.substr(0, 8), "TXERASE1");
  const EraserModel loaded = load_bytes(bytes);
  EXPECT_EQ(loaded, m);
  const auto x = random_tensor({3, 64, 64}, 10, 0, 1);
  EXPECT_EQ(forward(loaded, x), forward(m, x));
  EXPECT_EQ(saved_bytes(loaded), bytes);
}

TEST(Persistence, FileSizeMatchesLayout) {
  std::size_t params = 0;
  for (std::size_t i = 0; i < shared_model().layer_count(); ++i)
    params += shared_model().layer(i).weights.size() + shared_model().layer(i).bias.size();
  EXPECT_EQ(saved_bytes(shared_model()).size(), 8 + 4 + 8 * 16 + 4 * params);
}

TEST(Persistence, RejectsCorruptedMagic) {
  std::string bytes = saved_bytes(shared_model());
  bytes[3] = 'X';
  EXPECT_THROW(load_bytes(bytes), ModelFormatError);
}

TEST(Persistence, RejectsWrongLayerCount) {
  std::string bytes = saved_bytes(shared_model());
  put_u32_at(bytes, 8, 7);
  try {
    load_bytes(bytes);
    FAIL();
  } catch (const ModelFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("layer count 7"), std::string::npos) << e.what();
  }
}

TEST(Persistence, RejectsTruncationAndNamesLayer) {
  const std::string bytes = saved_bytes(shared_model());
  try {
    load_bytes(bytes.substr(0, bytes.size() - 10));
    FAIL();
  } catch (const ModelFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("deconv_4"), std::string::npos) << e.what();
  }
}

TEST(Persistence, RejectsShapeMismatchNamingLayer) {
  std::string bytes = saved_bytes(shared_model());
  put_u32_at(bytes, 12, 31);  // conv_1 out_channels
  try {
    load_bytes(bytes);
    FAIL();
  } catch (const ModelFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("conv_1"), std::string::npos) << e.what();
  }
}
