#include <gtest/gtest.h>

#include "miqa/macs.hpp"
#include "miqa/model.hpp"

using namespace miqa;

TEST(Macs, HandCountedUnits) {
  EXPECT_EQ(conv_macs(4, 8, 1, 1, 2, 2), 128u);
  EXPECT_EQ(linear_macs(128, 64), 8192u);
  EXPECT_EQ(MacsBreakdown{}.total(), 0u);
}

TEST(Macs, PrimitivesIssueTheHandCount) {
  MacScope conv;
  conv2d(Tensor<float>::zeros({4, 2, 2}), Tensor<float>::zeros({8, 4, 1, 1}));
  EXPECT_EQ(conv.count(), 128u);
  MacScope fc;
  linear(Tensor<float>::zeros({1, 128}), Tensor<float>::zeros({128, 64}), Tensor<float>::zeros({64}));
  EXPECT_EQ(fc.count(), 8192u);
}

TEST(Macs, AttentionCountMatchesExecution) {
  Rng rng(0);
  SelfAttention<float> sa(6, rng);
  MacScope scope;
  sa(Tensor<float>::zeros({5, 6}));
  EXPECT_EQ(scope.count(), attention_macs(5, 6));
}

// The analytic model must equal what a forward pass actually issues.
TEST(Macs, AnalyticCountMatchesForwardPass) {
  for (auto cfg : {ModelConfig::teacher(), ModelConfig::student()}) {
    for (std::size_t res : {32, 48, 64}) {
      cfg.height = cfg.width = res;
      for (auto ablation : {Ablation::none, Ablation::no_mal}) {
        cfg.ablation = ablation;
        Model<float> model(cfg, 1);
        NoGradGuard guard;
        MacScope scope;
        model.forward(Tensor<float>::zeros({3, res, res}));
        EXPECT_EQ(scope.count(), count_macs(cfg).total()) << res;
      }
    }
  }
}

TEST(Macs, TeacherCostsMoreThanStudent) {
  const auto t = count_macs(ModelConfig::teacher()), s = count_macs(ModelConfig::student());
  EXPECT_GT(t.total(), s.total());
  EXPECT_GT(t.of("backbone.mixing"), 0u);
  EXPECT_EQ(s.of("backbone.mixing"), 0u);
}

TEST(Macs, DoublingResolutionQuadruplesConv) {
  auto cfg = ModelConfig::student();
  cfg.height = cfg.width = 64;
  const auto a = count_macs(cfg).of("backbone.conv");
  cfg.height = cfg.width = 128;
  const auto b = count_macs(cfg).of("backbone.conv");
  EXPECT_NEAR(static_cast<double>(b) / static_cast<double>(a), 4.0, 0.05);
}

TEST(Macs, TableDocumentsConvention) {
  const auto table = count_macs(ModelConfig::student()).table();
  EXPECT_NE(table.find("1 MAC = one multiply-accumulate"), std::string::npos);
  EXPECT_NE(table.find("total"), std::string::npos);
}

TEST(Macs, ZeroStageConfigRejected) {
  auto cfg = ModelConfig::student();
  cfg.backbone.stage_channels.clear();
  EXPECT_THROW(count_macs(cfg), ConfigError);
}
