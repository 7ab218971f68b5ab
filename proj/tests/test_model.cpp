#include <gtest/gtest.h>

#include <cmath>

#include "miqa/inspect.hpp"
#include "miqa/model.hpp"
#include "support/gradcheck.hpp"

using namespace miqa;
using miqa::testing::random_tensor;

namespace {

using F = Tensor<float>;

F random_image(std::uint64_t seed, std::size_t h = 64, std::size_t w = 64) {
  Rng rng(seed);
  std::vector<float> v(3 * h * w);
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return F({3, h, w}, v);
}

double max_abs_diff(const F& a, const F& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a.values()[i]) - b.values()[i]));
  return m;
}

// Feature-wise branch of a MAL alone, averaged over inputs.
F feature_branch_only(const Mal<float>& mal, const std::vector<F>& xs) {
  const auto c = xs[0].dim(0), d = xs[0].dim(1), n = xs.size();
  std::vector<F> viewed;
  for (std::size_t i = 0; i < n; ++i) viewed.push_back(transpose(mal.per_input[i](transpose(xs[i]))));
  const auto stacked = stack_last(viewed);
  const auto tokens = reshape(permute(stacked, {1, 2, 0}), {d * n, c});
  return mean_last(permute(reshape(mal.feature_wise(tokens), {d, n, c}), {2, 0, 1}));
}

}  // namespace

TEST(Backbone, LevelShapesAt64) {
  Rng rng(0);
  Backbone<float> bb(ModelConfig::teacher().backbone, rng);
  const auto p = bb(random_image(1));
  const std::vector<Shape> want{{8, 32, 32}, {16, 16, 16}, {24, 8, 8}, {32, 4, 4}, {40, 2, 2}};
  for (std::size_t j = 0; j < kPyramidLevels; ++j) EXPECT_EQ(p.levels[j].shape(), want[j]);
}

TEST(Backbone, ExtentsHalveRoundingUp) {
  Rng rng(0);
  Backbone<float> bb(ModelConfig::student().backbone, rng);
  const auto p = bb(random_image(1, 50, 37));
  std::size_t h = 50, w = 37;
  for (const auto& level : p.levels) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    EXPECT_EQ(level.dim(1), h);
    EXPECT_EQ(level.dim(2), w);
  }
}

TEST(Backbone, ZeroImageGivesZeroLevelsWithoutMixing) {
  Rng rng(0);
  Backbone<float> bb(ModelConfig::student().backbone, rng);
  for (const auto& level : bb(F::zeros({3, 32, 32})).levels)
    for (float v : level.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Backbone, RejectsSmallOrWrongImages) {
  Rng rng(0);
  Backbone<float> bb(ModelConfig::student().backbone, rng);
  EXPECT_THROW(bb(F::zeros({3, 31, 64})), DimensionError);
  EXPECT_THROW(bb(F::zeros({1, 64, 64})), DimensionError);
}

TEST(Backbone, TeacherAndStudentShareLevelChannels) {
  Rng a(0), b(0);
  Backbone<float> t(ModelConfig::teacher().backbone, a), s(ModelConfig::student().backbone, b);
  const auto img = random_image(2);
  const auto pt = t(img), ps = s(img);
  for (std::size_t j = 0; j < kPyramidLevels; ++j) EXPECT_EQ(pt.levels[j].shape(), ps.levels[j].shape());
}

TEST(Lda, UnifiesLevelsToTokenForm) {
  Rng rng(3);
  Lda<float> lda(16, 32, 4, rng);
  EXPECT_EQ(lda.hidden_channels(), 32u);
  Rng data(4);
  std::vector<float> a(16 * 32 * 32), b(16 * 64 * 64);
  for (auto& x : a) x = static_cast<float>(data.uniform());
  for (auto& x : b) x = static_cast<float>(data.uniform());
  EXPECT_EQ(lda(F({16, 32, 32}, a)).shape(), (Shape{32, 16}));
  EXPECT_EQ(lda(F({16, 64, 64}, b)).shape(), (Shape{32, 16}));
}

TEST(Lda, LevelsSmallerThanGridAreReplicated) {
  Rng rng(3);
  Lda<float> lda(40, 32, 4, rng);
  EXPECT_EQ(lda(F::full({40, 2, 2}, 0.5f)).shape(), (Shape{32, 16}));
}

TEST(SelfAttention, SingleTokenIsOutputOfValue) {
  Rng rng(5);
  SelfAttention<double> sa(4, rng);
  const auto tok = random_tensor({1, 4}, rng);
  const auto want = sa.output(sa.value(tok));
  const auto got = sa(tok);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got.values()[i], want.values()[i], 1e-14);
}

TEST(SelfAttention, PermutationEquivariant) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto l = 2 + rng.below(6), e = 1 + rng.below(5);
    SelfAttention<double> sa(e, rng);
    const auto x = random_tensor({l, e}, rng);
    std::vector<std::size_t> perm(l);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = l - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<double> px(l * e);
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < e; ++j) px[i * e + j] = x.at({perm[i], j});
    const auto y = sa(x), py = sa(Tensor<double>({l, e}, px));
    EXPECT_EQ(py.shape(), x.shape());
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < e; ++j) EXPECT_NEAR(py.at({i, j}), y.at({perm[i], j}), 1e-12);
  }
}

TEST(SelfAttention, WeightsAreRowStochastic) {
  Rng rng(7);
  SelfAttention<float> sa(8, rng);
  F w;
  sa(F::full({5, 8}, 0.25f), &w);
  EXPECT_EQ(w.shape(), (Shape{5, 5}));
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += w.at({i, j});
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Mal, FiveLevelsGiveOpinionShape) {
  Rng rng(8);
  Mal<float> mal(5, 32, 16, rng);
  std::vector<F> xs;
  Rng data(9);
  for (int i = 0; i < 5; ++i) {
    std::vector<float> v(32 * 16);
    for (auto& x : v) x = static_cast<float>(data.uniform(-1.0, 1.0));
    xs.emplace_back(Shape{32, 16}, v);
  }
  F attention;
  EXPECT_EQ(mal(xs, &attention).shape(), (Shape{32, 16}));
  EXPECT_EQ(attention.shape(), (Shape{80, 80}));
}

TEST(Mal, ZeroChannelBranchLeavesFeatureBranch) {
  Rng rng(11);
  Mal<float> mal(3, 8, 4, rng);
  for (auto* t : {&mal.channel_wise.value.weight, &mal.channel_wise.value.bias, &mal.channel_wise.output.weight,
                  &mal.channel_wise.output.bias})
    std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0f);
  std::vector<F> xs;
  Rng data(12);
  for (int i = 0; i < 3; ++i) {
    std::vector<float> v(32);
    for (auto& x : v) x = static_cast<float>(data.uniform(-1.0, 1.0));
    xs.emplace_back(Shape{8, 4}, v);
  }
  EXPECT_LT(max_abs_diff(mal(xs), feature_branch_only(mal, xs)), 1e-6);
}

TEST(Mal, DifferentSeedsGiveDifferentOpinions) {
  Rng a(1), b(2);
  Mal<float> m1(5, 8, 4, a), m2(5, 8, 4, b);
  std::vector<F> xs(5, F::full({8, 4}, 0.3f));
  xs[2] = F::full({8, 4}, -0.2f);
  EXPECT_GT(max_abs_diff(m1(xs), m2(xs)), 0.0);
}

TEST(Mal, MismatchedInputsRejected) {
  Rng rng(1);
  Mal<float> mal(2, 8, 4, rng);
  EXPECT_THROW(mal({F::zeros({8, 4}), F::zeros({8, 5})}), DimensionError);
  EXPECT_THROW(mal({F::zeros({8, 4})}), DimensionError);
}

TEST(Mal, IdenticalInputsFuseLikeOne) {
  Rng rng(13);
  Mal<float> single(1, 8, 4, rng);
  Mal<float> triple = single;
  triple.per_input = {single.per_input[0], single.per_input[0], single.per_input[0]};
  Rng data(14);
  std::vector<float> v(32);
  for (auto& x : v) x = static_cast<float>(data.uniform(-1.0, 1.0));
  const F x({8, 4}, v);
  EXPECT_LT(max_abs_diff(triple({x, x, x}), single({x})), 1e-5);
}

TEST(Model, DefaultForwardContract) {
  Model<float> model(ModelConfig::teacher(), 0);
  const auto out = model.forward(prepare_input(random_image(1), model.config()));
  EXPECT_EQ(out.score.shape(), (Shape{1}));
  EXPECT_TRUE(std::isfinite(out.score.item()));
  ASSERT_EQ(out.opinions.size(), 3u);
  for (const auto& o : out.opinions) EXPECT_EQ(o.shape(), (Shape{32, 16}));
  EXPECT_EQ(model.head().fc1.weight.shape(), (Shape{128, 64}));
  EXPECT_EQ(model.head().fc2.weight.shape(), (Shape{64, 1}));
  EXPECT_EQ(model.opinion_mals().size(), 3u);
  EXPECT_EQ(model.fusion().inputs(), 3u);
}

TEST(Model, SingleOpinionFusion) {
  auto cfg = ModelConfig::student();
  cfg.opinions = 1;
  Model<float> model(cfg, 0);
  const auto out = model.forward(prepare_input(random_image(1), cfg));
  EXPECT_EQ(out.opinions.size(), 1u);
  EXPECT_EQ(model.fusion().inputs(), 1u);
}

TEST(Model, TeacherAndStudentOpinionsAlign) {
  Model<float> t(ModelConfig::teacher(), 0), s(ModelConfig::student(), 0);
  const auto img = prepare_input(random_image(3), t.config());
  const auto ot = t.forward(img).opinions, os = s.forward(img).opinions;
  ASSERT_EQ(ot.size(), os.size());
  for (std::size_t i = 0; i < ot.size(); ++i) EXPECT_EQ(ot[i].shape(), os[i].shape());
}

TEST(Model, OpinionShapeIndependentOfResolution) {
  for (std::size_t res : {32, 40, 48, 64, 96}) {
    auto cfg = ModelConfig::student();
    cfg.height = cfg.width = res;
    Model<float> model(cfg, 0);
    for (const auto& o : model.forward(prepare_input(random_image(4, res, res), cfg)).opinions)
      EXPECT_EQ(o.shape(), (Shape{32, 16})) << res;
  }
}

TEST(Model, ParameterCountGrowsWithOpinions) {
  std::size_t prev = 0;
  for (std::size_t m = 1; m <= 4; ++m) {
    auto cfg = ModelConfig::student();
    cfg.opinions = m;
    Model<float> model(cfg, 0);
    EXPECT_GT(model.parameter_count(), prev);
    prev = model.parameter_count();
  }
}

TEST(Model, DeterministicInSeed) {
  Model<float> a(ModelConfig::teacher(), 5), b(ModelConfig::teacher(), 5), c(ModelConfig::teacher(), 6);
  const auto x = prepare_input(random_image(5), a.config());
  EXPECT_EQ(a.forward(x).score.item(), b.forward(x).score.item());
  EXPECT_NE(a.forward(x).score.item(), c.forward(x).score.item());
}

TEST(Model, OpinionMalsInitializedIndependently) {
  Model<float> model(ModelConfig::student(), 0);
  const auto& mals = model.opinion_mals();
  EXPECT_NE(mals[0].feature_wise.query.weight.values(), mals[1].feature_wise.query.weight.values());
  EXPECT_NE(mals[0].per_input[0].key.weight.values(), mals[0].per_input[1].key.weight.values());
}

TEST(Model, DoubleShadowAgreesWithFloat) {
  Model<float> f(ModelConfig::teacher(), 7);
  const auto d = f.cast<double>();
  const auto img = random_image(6);
  const auto xd = prepare_input(Tensor<double>(img.shape(), {img.values().begin(), img.values().end()}), d.config());
  EXPECT_NEAR(f.forward(prepare_input(img, f.config())).score.item(), d.forward(xd).score.item(), 1e-4);
}

TEST(Model, NoMalAblationAveragesLdaOutputs) {
  auto cfg = ModelConfig::student();
  cfg.ablation = Ablation::no_mal;
  Model<float> model(cfg, 0);
  EXPECT_TRUE(model.opinion_mals().empty());
  EXPECT_EQ(model.fusion().inputs(), 1u);
  const auto x = prepare_input(random_image(7), cfg);
  const auto out = model.forward(x);
  ASSERT_EQ(out.opinions.size(), 1u);
  const auto pyramid = model.backbone()(x);
  std::vector<float> want(32 * 16, 0.0f);
  for (std::size_t j = 0; j < kPyramidLevels; ++j) {
    const auto a = model.lda(j)(pyramid.levels[j]);
    for (std::size_t i = 0; i < want.size(); ++i) want[i] += a.values()[i] / 5.0f;
  }
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(out.opinions[0].values()[i], want[i], 1e-6);
  for (const auto& [name, _] : model.named_parameters()) EXPECT_NE(name.rfind("mal", 0), 0u) << name;
}

TEST(Model, InconsistentHeadIsConfigError) {
  auto cfg = ModelConfig::student();
  cfg.head.flatten = 100;
  EXPECT_THROW(Model<float>(cfg, 0), ConfigError);
  cfg = ModelConfig::student();
  cfg.tokens = 15;
  EXPECT_THROW(Model<float>(cfg, 0), ConfigError);
  cfg = ModelConfig::student();
  cfg.opinions = 0;
  EXPECT_THROW(Model<float>(cfg, 0), ConfigError);
}

TEST(PrepareInput, ResizesAndStandardizes) {
  auto cfg = ModelConfig::student();
  cfg.height = cfg.width = 16;
  const auto x = prepare_input(F::full({3, 64, 64}, 0.75f), cfg);
  EXPECT_EQ(x.shape(), (Shape{3, 32, 32}));
  for (float v : x.values()) EXPECT_FLOAT_EQ(v, 1.0f);
  EXPECT_FALSE(x.requires_grad());
}

TEST(Similarity, SelfMatrixUnitDiagonalAndSymmetric) {
  Model<float> model(ModelConfig::student(), 0);
  std::vector<F> probes{random_image(1), random_image(2), random_image(3)};
  const auto s = mal_similarity(model, probes);
  ASSERT_EQ(s.rows, 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(*s.at(i, i), 1.0);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(*s.at(i, j), *s.at(j, i), 1e-6);
  }
  EXPECT_THROW(mal_similarity(model, {}), ContractError);
}

TEST(Similarity, ZeroNormIsUndefined) {
  EXPECT_FALSE(cosine_similarity(F::zeros({4}), F::full({4}, 1.0f)).has_value());
  EXPECT_DOUBLE_EQ(*cosine_similarity(F({2}, {1, 0}), F({2}, {0, 1})), 0.0);
  SimilarityMatrix m{1, 2, {0.5, std::nullopt}};
  EXPECT_EQ(m.to_csv(), "mal,0,1\n0,0.500000,NA\n");
}

TEST(AttentionMaps, OnePerOpinionAtImageSize) {
  Model<float> model(ModelConfig::teacher(), 0);
  const auto maps = attention_maps(model, random_image(9));
  ASSERT_EQ(maps.size(), 3u);
  for (const auto& m : maps) {
    EXPECT_EQ(m.height, 64u);
    EXPECT_EQ(m.width, 64u);
    EXPECT_EQ(m.pixels.size(), 64u * 64u);
  }
  EXPECT_NE(maps[0].pixels, maps[1].pixels);
}
