#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "robusthar/checkpoint.hpp"
#include "robusthar/cleaner.hpp"
#include "robusthar/dataflow.hpp"
#include "robusthar/error.hpp"
#include "robusthar/metrics.hpp"
#include "robusthar/nn/ops.hpp"
#include "robusthar/recognizer.hpp"

using namespace robusthar;
using nn::Var;

namespace {

DaeConfig toy_dae(std::size_t h = 16, std::size_t w = 8) {
  DaeConfig c;
  c.input_h = h;
  c.input_w = w;
  c.base_kernels = 4;
  c.latent_dim = 16;
  return c;
}

HarConfig toy_har(std::size_t h = 24, std::size_t w = 6, std::size_t classes = 4) {
  HarConfig c;
  c.input_h = h;
  c.input_w = w;
  c.kernels = 4;
  c.num_classes = classes;
  return c;
}

std::vector<Tensor> random_segments(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(Tensor::uniform({h, w}, 0, 1, rng));
  return out;
}

double batch_loss(const DaeParams& p, const std::vector<Tensor>& xs) {
  return nn::mse_loss(dae_forward(p, Var(stack(xs))).x_prime, Var(stack(xs))).value()[0];
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("robusthar_test_" + name);
}

}  // namespace

TEST_CASE("dae geometry on a 171x27 input") {
  DaeConfig c;
  c.input_h = 171;
  c.input_w = 27;
  auto enc = encoder_input_shapes(c);
  const std::vector<Shape> expected{{171, 27, 1}, {86, 14, 64}, {43, 7, 128}, {22, 4, 256}, {11, 2, 512}};
  CHECK(enc == expected);
  auto geo = c.encoder_geometry();
  CHECK(geo[3].out_h() == 11);
  CHECK(geo[3].out_w() == 2);
  CHECK(geo[3].out_kernels == 512);
  CHECK(c.bottleneck_size() == 11 * 2 * 512);
  auto dec = decoder_shapes(c);
  REQUIRE(dec.size() == 5);
  CHECK(dec.front() == Shape{11, 2, 512});
  // Decoder stages retrace the encoder shapes in reverse.
  CHECK(std::equal(dec.begin(), dec.end(), enc.rbegin(), enc.rend()));
}

TEST_CASE("dae forward contract") {
  auto c = toy_dae(21, 7);
  auto p = DaeParams::init(c, StreamSeed(1));
  CHECK_NOTHROW(p.check_structure());
  std::mt19937_64 rng(2);
  auto x = Tensor::uniform({21, 7}, 0, 1, rng);
  auto out = dae_forward(p, Var(x));
  CHECK(out.x_prime.shape() == Shape{21, 7});
  CHECK(out.z.shape() == Shape{16});
  for (double v : out.x_prime.value().values()) CHECK((v >= 0.0 && v <= 1.0));
  SUBCASE("adversarially large inputs stay in range") {
    auto wild = Tensor::uniform({21, 7}, -10, 10, rng);
    for (auto& v : wild.values()) v = v < 0 ? -10.0 : 10.0;
    auto y = clean(p, CorruptedSegment{wild, FaultMask(21, 7), {}});
    CHECK(y.all_finite());
    for (double v : y.values()) CHECK((v >= 0.0 && v <= 1.0));
  }
  SUBCASE("batch equals per-sample") {
    auto xs = random_segments(3, 21, 7, 5);
    auto batch = clean_batch(p, xs, 2);
    for (std::size_t i = 0; i < 3; ++i) {
      auto y = dae_forward(p, Var(xs[i])).x_prime.value();
      for (std::size_t j = 0; j < y.size(); ++j) CHECK(batch[i][j] == doctest::Approx(y[j]).epsilon(1e-12));
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(dae_forward(p, Var(Tensor({20, 7}))), ShapeError);
    CHECK_THROWS_AS(dae_forward(p, Var(Tensor({21}))), ShapeError);
    auto bad = c;
    bad.input_h = 0;
    CHECK_THROWS_AS(bad.validate(), ValueError);
    auto broken = p;
    broken.dec_bias[0] = Var::parameter(Tensor({2}));
    CHECK_THROWS_AS(broken.check_structure(), ShapeError);
  }
}

TEST_CASE("dae training") {
  auto c = toy_dae();
  SUBCASE("identity corruption overfits one batch below 1e-3 within 2000 steps") {
    auto xs = random_segments(4, 16, 8, 3);
    // Smooth targets; iid noise is incompressible through a 16-d latent.
    for (std::size_t i = 0; i < xs.size(); ++i)
      for (std::size_t t = 0; t < 16; ++t)
        for (std::size_t ch = 0; ch < 8; ++ch)
          xs[i].at(t, ch) = 0.5 + 0.3 * std::sin(0.4 * static_cast<double>(t * (i + 1)) + static_cast<double>(ch));
    c.batch_size = 4;
    c.epochs = 2000;
    c.learning_rate = 1e-3;
    auto r = dae_train(c, xs, identity_corruption(), StreamSeed(4));
    CHECK(r.loss_curve.size() == 2000);
    CHECK(r.loss_curve.back() < 1e-3);
  }
  SUBCASE("held-out loss falls, curves are seeded") {
    SynthParams sp;
    sp.length = 16;
    sp.sensors = 2;
    sp.channels_per_sensor = 4;
    sp.segments = 160;
    auto segs = synth_generate(sp);
    std::vector<Tensor> train, held;
    for (std::size_t i = 0; i < segs.size(); ++i) (i < 128 ? train : held).push_back(segs[i].data);
    c.epochs = 5;
    c.batch_size = 16;
    c.learning_rate = 1e-3;
    CorruptionSpec spec;
    spec.mode = CorruptionMode::noise_and_dropout;
    spec.sigma = 0.1;
    spec.s_norm = 10;
    spec.s_corr = 4;
    const double before = batch_loss(DaeParams::init(c, StreamSeed(6).child("init")), held);
    auto a = dae_train(c, train, spec, StreamSeed(6));
    CHECK(batch_loss(a.params, held) < before);
    auto b = dae_train(c, train, spec, StreamSeed(6));
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.params.enc_dense_w.value() == b.params.enc_dense_w.value());
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(dae_train(c, std::vector<Tensor>{}, identity_corruption(), StreamSeed(1)), ValueError);
    CHECK_THROWS_AS(dae_train(c, random_segments(2, 15, 8, 1), identity_corruption(), StreamSeed(1)), ShapeError);
    SegmentSet test_split;
    test_split.split = Split::test;
    test_split.segments.push_back({random_segments(1, 16, 8, 1)[0], 0, {}});
    CHECK_THROWS_AS(dae_train(c, test_split, identity_corruption(), StreamSeed(1)), ValueError);
  }
}

TEST_CASE("dae checkpoint round trip is bit exact") {
  auto p = DaeParams::init(toy_dae(), StreamSeed(8));
  const auto bytes = serialize_checkpoint(p.to_checkpoint());
  auto q = DaeParams::from_checkpoint(deserialize_checkpoint(bytes));
  CHECK(serialize_checkpoint(q.to_checkpoint()) == bytes);
  auto path = temp_path("dae.ckpt");
  save_checkpoint(q.to_checkpoint(), path);
  auto r = DaeParams::from_checkpoint(load_checkpoint(path));
  CHECK(serialize_checkpoint(r.to_checkpoint()) == bytes);
  std::filesystem::remove(path);
  CHECK(r.config.base_kernels == 4);
  auto har = HarParams::init(toy_har(), StreamSeed(1)).to_checkpoint();
  CHECK_THROWS_AS(DaeParams::from_checkpoint(har), IoError);
}

TEST_CASE("recognizer geometry") {
  auto c = toy_har();
  CHECK(c.sequence_length() == 8);
  CHECK(c.embedding_dim() == 4 * 6);
  for (std::size_t i = 0; i <= 4; ++i) CHECK(c.height_after(i) == 24 - 4 * i);
  for (const auto& g : c.conv_geometry()) {
    CHECK(g.kernel_w == 1);
    CHECK(g.in_w == 6);
    CHECK(g.out_w() == 6);
  }
  auto layers = har_layers(c);
  CHECK(std::none_of(layers.begin(), layers.end(), [](const std::string& l) { return l.find("pool") != std::string::npos; }));
  CHECK(std::count(layers.begin(), layers.end(), std::string("relu")) == 4);
  CHECK(layers.back() == "softmax");
  auto short_input = c;
  short_input.input_h = 16;
  CHECK_THROWS_AS(short_input.validate(), ShapeError);
  auto one_class = c;
  one_class.num_classes = 1;
  CHECK_THROWS_AS(one_class.validate(), ValueError);
}

TEST_CASE("recognizer forward contract") {
  auto c = toy_har();
  auto p = HarParams::init(c, StreamSeed(2));
  std::mt19937_64 rng(3);
  auto xs = random_segments(5, 24, 6, 4);
  for (const auto& x : xs) {
    auto probs = har_forward(p, x);
    double sum = 0;
    for (double v : probs.values()) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
  auto trace = har_forward_batch(p, Var(stack(xs)));
  CHECK(trace.features.shape() == Shape{5, 8, 6, 4});
  CHECK(trace.attention_weights.shape() == Shape{5, 8, 8});
  CHECK_THROWS_AS(har_forward(p, Tensor({23, 6})), ShapeError);

  SUBCASE("prediction equals argmax of an independent pass") {
    auto preds = har_predict_batch(p, xs, 2);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto logits = har_forward_batch(p, Var(xs[i].reshaped({1, 24, 6}))).logits.value();
      CHECK(preds[i] == argmax(logits.values()));
      CHECK(har_predict(p, xs[i]) == preds[i]);
    }
  }
  SUBCASE("channel permutation permutes the feature map") {
    // Share one kernel across input channels: conv with width-1 kernels then
    // acts on each sensor channel separately.
    std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    Tensor x = xs[0], y({24, 6});
    for (std::size_t t = 0; t < 24; ++t)
      for (std::size_t ch = 0; ch < 6; ++ch) y.at(t, ch) = x.at(t, perm[ch]);
    auto fx = har_forward_batch(p, Var(x.reshaped({1, 24, 6}))).features.value();
    auto fy = har_forward_batch(p, Var(y.reshaped({1, 24, 6}))).features.value();
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t ch = 0; ch < 6; ++ch)
        for (std::size_t k = 0; k < 4; ++k) {
          CHECK(fy[(t * 6 + ch) * 4 + k] == doctest::Approx(fx[(t * 6 + perm[ch]) * 4 + k]).epsilon(1e-12));
        }
  }
}

TEST_CASE("argmax") {
  const std::vector<double> tie{0.2, 0.4, 0.4};
  CHECK(argmax(tie) == 1);
  std::vector<double> logits{1.0, -2.0, 3.5, 3.4};
  CHECK(argmax(logits) == 2);
  for (auto& v : logits) v += 100.0;
  CHECK(argmax(logits) == 2);
  CHECK_THROWS_AS(argmax(std::span<const double>{}), ValueError);
}

TEST_CASE("recognizer training") {
  SynthParams sp;
  sp.length = 24;
  sp.sensors = 3;
  sp.channels_per_sensor = 2;
  sp.segments = 32;
  auto segs = synth_generate(sp);
  std::vector<Tensor> xs;
  std::vector<int> ys;
  for (const auto& s : segs) {
    xs.push_back(s.data);
    ys.push_back(s.label);
  }
  auto c = toy_har(24, 6, 4);
  c.kernels = 8;
  c.batch_size = 8;
  SUBCASE("overfits 32 segments within 200 epochs") {
    c.epochs = 200;
    auto r = har_train(c, xs, ys, StreamSeed(3));
    auto hit = std::find(r.accuracy_curve.begin(), r.accuracy_curve.end(), 1.0);
    CHECK(hit != r.accuracy_curve.end());
    CHECK(accuracy(har_predict_batch(r.params, xs), ys) == 1.0);
  }
  SUBCASE("seeded determinism") {
    c.epochs = 3;
    auto a = har_train(c, xs, ys, StreamSeed(4));
    auto b = har_train(c, xs, ys, StreamSeed(4));
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.accuracy_curve == b.accuracy_curve);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(har_train(c, std::vector<Tensor>{}, std::vector<int>{}, StreamSeed(1)), ValueError);
    std::vector<int> bad = ys;
    bad[0] = 4;
    CHECK_THROWS_AS(har_train(c, xs, bad, StreamSeed(1)), ValueError);
    SegmentSet unassigned;
    unassigned.segments = segs;
    CHECK_THROWS_AS(har_train(c, unassigned, StreamSeed(1)), ValueError);
  }
}

TEST_CASE("har checkpoint round trip is bit exact") {
  auto c = toy_har();
  c.attention_scale = nn::AttentionScale::sqrt_dimension;
  auto p = HarParams::init(c, StreamSeed(9));
  const auto bytes = serialize_checkpoint(p.to_checkpoint());
  auto q = HarParams::from_checkpoint(deserialize_checkpoint(bytes));
  CHECK(serialize_checkpoint(q.to_checkpoint()) == bytes);
  CHECK(q.config.attention_scale == nn::AttentionScale::sqrt_dimension);
  auto x = random_segments(1, 24, 6, 1)[0];
  CHECK(har_forward(p, x) == har_forward(q, x));
}

TEST_CASE("checkpoint container errors") {
  Checkpoint ck;
  ck.kind = "dae";
  ck.config = {{"a", "1"}};
  ck.arrays.emplace_back("w", Tensor({2, 2}, 1.5));
  const auto bytes = serialize_checkpoint(ck);
  CHECK(deserialize_checkpoint(bytes).array("w") == Tensor({2, 2}, 1.5));
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), IoError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), IoError);
  CHECK_THROWS_AS(ck.array("missing"), IoError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("does_not_exist.ckpt")), IoError);
}
