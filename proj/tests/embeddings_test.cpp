#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "contextshot/embeddings.hpp"
#include "contextshot/error.hpp"
#include "support.hpp"

using namespace cshot;
using namespace cshot::testing;

TEST(WordTable, LoadsTwoLines) {
  std::istringstream in("cat\t0.1 0.2 0.3\ndog\t-1 0 1e-3\n");
  const WordTable t = load_word_table(in);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.dim(), 3u);
  EXPECT_EQ(t.vector("dog"), Tensor::vector({-1, 0, 1e-3}));
  EXPECT_EQ(t.index_of("cat"), 0u);
}

TEST(WordTable, DuplicateNameIsFormatError) {
  std::istringstream in("cat\t1 2\ncat\t3 4\n");
  EXPECT_THROW(load_word_table(in), FormatError);
}

TEST(WordTable, InconsistentDimensionIsFormatError) {
  std::istringstream in("cat\t1 2\ndog\t3 4 5\n");
  EXPECT_THROW(load_word_table(in), FormatError);
}

TEST(WordTable, MalformedLineReportsLineNumber) {
  std::istringstream in("cat\t1 2\ndog\t3 x\n");
  try {
    load_word_table(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream no_tab("cat 1 2\n");
  EXPECT_THROW(load_word_table(no_tab), ParseError);
}

TEST(WordTable, UnknownWordIsLookupError) {
  WordTable t(2);
  const double v[] = {1, 2};
  t.add("a", v);
  EXPECT_THROW(t.vector("b"), LookupError);
  EXPECT_TRUE(t.contains("a"));
  EXPECT_FALSE(t.contains("b"));
}

TEST(WordTable, LargeTableRoundTripsBitExactly) {
  Rng rng(1211);
  WordTable t(16);
  for (std::size_t i = 0; i < 1211; ++i) {
    std::vector<double> v(16);
    for (double& x : v) x = standard_normal(rng) * std::pow(10.0, static_cast<double>(uniform_index(rng, 9)) - 4.0);
    t.add("class" + std::to_string(i), v);
  }
  std::stringstream buf;
  save_word_table(t, buf);
  const WordTable back = load_word_table(buf);
  EXPECT_EQ(back, t);
  EXPECT_EQ(back.fingerprint(), t.fingerprint());

  const auto dir = scratch_dir("words");
  save_word_table(t, dir / "w.tsv");
  EXPECT_EQ(load_word_table(dir / "w.tsv"), t);
  EXPECT_THROW(load_word_table(dir / "missing.tsv"), IoError);
}

TEST(Cosine, Examples) {
  const double a[] = {1, 1}, b[] = {1, 0}, c[] = {0, 3}, z[] = {0, 0};
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(b, c), 0.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(a, b), 0.70710678118654752, 1e-12);
  EXPECT_THROW(cosine_similarity(a, z), DomainError);
}

namespace {

void set_identity(Parameter& p) {
  p.value.fill(0.0);
  for (std::size_t i = 0; i < std::min(p.value.rows(), p.value.cols()); ++i) p.value.at(i, i) = 1.0;
}

}  // namespace

TEST(Encoder, ZeroWeightsGiveZeroOutput) {
  Rng rng(1);
  EncoderParams p = EncoderParams::init(5, 7, 4, rng);
  for (Parameter* q : p.parameters()) q->value.fill(0.0);
  EXPECT_EQ(encode_visual(Tensor::vector({1, 2, 3, 4, 5}), p), Tensor({4}));
  EXPECT_EQ(p.output_dim(), 4u);
}

TEST(Encoder, IdentityWeightsPassTanhThrough) {
  Rng rng(1);
  EncoderParams p = EncoderParams::init(3, 3, 3, rng);
  set_identity(p.w1);
  set_identity(p.w2);
  p.b1.value.fill(0.0);
  p.b2.value = Tensor::vector({0.5, 0.0, -0.5});
  const Tensor out = encode_visual(Tensor::vector({0.2, -1.0, 3.0}), p);
  EXPECT_NEAR(out[0], std::tanh(0.2) + 0.5, 1e-15);
  EXPECT_NEAR(out[1], std::tanh(-1.0), 1e-15);
  EXPECT_NEAR(out[2], std::tanh(3.0) - 0.5, 1e-15);
}

TEST(Encoder, WrongInputWidthIsDimensionError) {
  Rng rng(1);
  EncoderParams p = EncoderParams::init(3, 4, 2, rng);
  EXPECT_THROW(encode_visual(Tensor::vector({1, 2}), p), DimensionError);
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  EncoderParams p = EncoderParams::init(6, 5, 4, rng);
  const Tensor x = random_tensor({6}, rng);
  const Tensor target = random_tensor({4}, rng);
  auto list = p.parameters();
  for (Parameter* q : list) q->zero_grad();
  {
    Tape t;
    Var out = encode_visual(t.constant(x), p);
    t.backward(ad::sum_squares(ad::sub(out, t.constant(target))));
    t.accumulate_grads(list);
  }
  auto reference = [&] {
    const Vec y = ref_encode(to_vec(x.data()), p);
    Real s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - target[i]) * (y[i] - target[i]);
    return s;
  };
  EXPECT_LT(grad_check(reference, list).max_rel_error, 1e-4);
}

TEST(Projector, ZeroAndIdentity) {
  Rng rng(2);
  ProjectorParams p = ProjectorParams::init(3, 3, rng);
  p.w.value.fill(0.0);
  p.b.value.fill(0.0);
  EXPECT_EQ(project_context(Tensor::vector({1, 2, 3}), p), Tensor({3}));
  set_identity(p.w);
  const Tensor out = project_context(Tensor::vector({0.1, -2, 0.7}), p);
  EXPECT_EQ(out, elementwise(Unary::Tanh, Tensor::vector({0.1, -2, 0.7})));
  EXPECT_THROW(project_context(Tensor::vector({1, 2}), p), DimensionError);
}

TEST(Projector, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  ProjectorParams p = ProjectorParams::init(4, 6, rng);
  const Tensor c = random_tensor({4}, rng);
  auto list = p.parameters();
  for (Parameter* q : list) q->zero_grad();
  {
    Tape t;
    Var out = project_context(t.constant(c), p);
    t.backward(ad::sum_squares(ad::sub(out, t.constant(Tensor({6}, 0.3)))));
    t.accumulate_grads(list);
  }
  auto reference = [&] {
    const Vec y = ref_tanh(ref_affine(p.w, &p.b, to_vec(c.data())));
    Real s = 0;
    for (Real v : y) s += (v - static_cast<Real>(0.3)) * (v - static_cast<Real>(0.3));
    return s;
  };
  EXPECT_LT(grad_check(reference, list).max_rel_error, 1e-4);
}
