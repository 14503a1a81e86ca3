#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "crfu/errors.hpp"
#include "crfu/ib.hpp"
#include "crfu/rng.hpp"
#include "oracles_f64.hpp"
#include "test_util.hpp"

using namespace crfu;

namespace {

ModelDims tiny_dims() {
  ModelDims d;
  d.rep_hidden = {16};
  d.app_hidden = {8};
  d.latent_dim = 4;
  return d;
}

// Quadrature oracle: KL(N(mu_p, var_p) || N(mu_q, var_q)) for 1-D Gaussians
// by Simpson integration of p log(p/q) over [-12, 12].
double kl_1d_quadrature(double mu_p, double logvar_p, double mu_q, double logvar_q) {
  const double var_p = std::exp(logvar_p), var_q = std::exp(logvar_q);
  auto log_pdf = [](double x, double mu, double var) {
    return -0.5 * std::log(2.0 * 3.14159265358979323846 * var) - (x - mu) * (x - mu) / (2.0 * var);
  };
  const int n = 4800;  // even
  const double a = -12.0, b = 12.0, h = (b - a) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    double x = a + h * i;
    double lp = log_pdf(x, mu_p, var_p);
    double f = std::exp(lp) * (lp - log_pdf(x, mu_q, var_q));
    double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * f;
  }
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("encode: zero head, determinism, manual forward oracle") {
  ModelDims dims = tiny_dims();
  IBModel m = make_ib_model(6, 3, dims, 0.1f, 5);

  // zero the final representer layer -> mu = 0, logvar = 0
  IBModel zero_head = m;
  std::string last = std::to_string(m.rep_dims.size() - 2);
  for (float& v : zero_head.rep.at(last + ".w").data) v = 0.0f;
  for (float& v : zero_head.rep.at(last + ".b").data) v = 0.0f;
  Rng rng(8);
  Tensor x = testutil::random_tensor({3, 6}, rng);
  GaussianPosterior post = encode(zero_head, x);
  for (float v : post.mu.data) CHECK(v == 0.0f);
  for (float v : post.logvar.data) CHECK(v == 0.0f);

  // identical inputs -> identical posteriors
  Tensor x2 = x;
  GaussianPosterior p1 = encode(m, x), p2 = encode(m, x2);
  CHECK(p1.mu.data == p2.mu.data);
  CHECK(p1.logvar.data == p2.logvar.data);

  // independent re-implementation of the forward chain
  GaussianPosterior got = encode(m, x);
  const std::size_t k = dims.latent_dim;
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> h(16);
    for (std::size_t o = 0; o < 16; ++o) {
      double acc = m.rep.at("0.b").data[o];
      for (std::size_t i = 0; i < 6; ++i) acc += x.at(r, i) * m.rep.at("0.w").at(i, o);
      h[o] = std::max(0.0, acc);
    }
    for (std::size_t o = 0; o < 2 * k; ++o) {
      double acc = m.rep.at("1.b").data[o];
      for (std::size_t i = 0; i < 16; ++i) acc += h[i] * m.rep.at("1.w").at(i, o);
      double expect = o < k ? got.mu.at(r, o) : got.logvar.at(r, o - k);
      CHECK(std::abs(acc - expect) <= 1e-5);
    }
  }

  Tensor bad = testutil::random_tensor({2, 5}, rng);
  CHECK_THROWS_AS(encode(m, bad), DimensionError);
}

TEST_CASE("reparameterize: eps=0, unit sigma, Monte Carlo moments") {
  GaussianPosterior post{Tensor::matrix(1, 2, {0.3f, -1.0f}), Tensor::matrix(1, 2, {0.0f, 0.5f})};
  Tensor zero_eps = Tensor::zeros({1, 2});
  Tensor z = reparameterize(post, zero_eps);
  CHECK(z.data[0] == doctest::Approx(0.3f));
  CHECK(z.data[1] == doctest::Approx(-1.0f));

  GaussianPosterior unit{Tensor::matrix(1, 2, {1.0f, 2.0f}), Tensor::zeros({1, 2})};
  Tensor e = Tensor::matrix(1, 2, {0.5f, -0.25f});
  Tensor z2 = reparameterize(unit, e);
  CHECK(z2.data[0] == doctest::Approx(1.5f));
  CHECK(z2.data[1] == doctest::Approx(1.75f));

  // 1e5 samples: mean within 4 sigma/sqrt(n), variance within 5%
  const int n = 100000;
  GaussianPosterior p{Tensor::matrix(1, 1, {0.7f}), Tensor::matrix(1, 1, {-0.4f})};
  double sigma = std::exp(-0.2);
  Rng rng(21);
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    Tensor eps = Tensor::matrix(1, 1, {rng.normal()});
    double v = reparameterize(p, eps).data[0];
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean - 0.7) <= 4.0 * sigma / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - sigma * sigma) <= 0.05 * sigma * sigma);

  Tensor bad_eps = Tensor::zeros({2, 1});
  CHECK_THROWS_AS(reparameterize(p, bad_eps), DimensionError);
}

TEST_CASE("kl_to_standard_normal: closed forms and quadrature oracle") {
  GaussianPosterior prior{Tensor::zeros({1, 3}), Tensor::zeros({1, 3})};
  CHECK(kl_to_standard_normal(prior) == doctest::Approx(0.0));

  GaussianPosterior half{Tensor::matrix(1, 1, {1.0f}), Tensor::zeros({1, 1})};
  CHECK(kl_to_standard_normal(half) == doctest::Approx(0.5).epsilon(1e-6));

  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    float mu = static_cast<float>(4.0 * rng.uniform() - 2.0);
    float lv = static_cast<float>(3.0 * rng.uniform() - 1.5);
    GaussianPosterior p{Tensor::matrix(1, 1, {mu}), Tensor::matrix(1, 1, {lv})};
    double expect = kl_1d_quadrature(mu, lv, 0.0, 0.0);
    CHECK(std::abs(kl_to_standard_normal(p) - expect) <= 1e-3);
  }

  // nonnegative, zero iff (0,0)
  for (int trial = 0; trial < 200; ++trial) {
    float mu = static_cast<float>(6.0 * rng.uniform() - 3.0);
    float lv = static_cast<float>(4.0 * rng.uniform() - 2.0);
    GaussianPosterior p{Tensor::matrix(1, 1, {mu}), Tensor::matrix(1, 1, {lv})};
    float v = kl_to_standard_normal(p);
    CHECK(v >= 0.0f);
    if (std::abs(mu) > 1e-3 || std::abs(lv) > 1e-3) CHECK(v > 1e-7);
  }
}

TEST_CASE("approximate: uniform head, row normalization, argmax consistency") {
  ModelDims dims = tiny_dims();
  IBModel m = make_ib_model(6, 5, dims, 0.0f, 3);
  std::string last = std::to_string(m.app_dims.size() - 2);
  IBModel uniform = m;
  for (float& v : uniform.app.at(last + ".w").data) v = 0.0f;
  for (float& v : uniform.app.at(last + ".b").data) v = 0.0f;
  Rng rng(4);
  Tensor z = testutil::random_tensor({4, 4}, rng);
  Tensor probs = approximate(uniform, z);
  for (float v : probs.data) CHECK(v == doctest::Approx(0.2f).epsilon(1e-5));

  Tensor p2 = approximate(m, z);
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0;
    for (float v : p2.row(r)) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("ib_loss: composition identities") {
  ModelDims dims = tiny_dims();
  Rng rng(17);
  Tensor x = testutil::random_tensor({5, 6}, rng);
  std::vector<std::uint32_t> y = {0, 1, 2, 0, 1};
  Tensor eps = testutil::random_tensor({5, 4}, rng);

  IBModel m0 = make_ib_model(6, 3, dims, 0.0f, 5);
  IBLoss l0 = ib_loss(m0, x, y, eps);
  CHECK(l0.total == l0.app);  // beta = 0 -> exact equality

  IBModel m = make_ib_model(6, 3, dims, 0.37f, 5);
  IBLoss l = ib_loss(m, x, y, eps);
  CHECK(l.total == doctest::Approx(l.app + 0.37f * l.rep).epsilon(1e-6));

  // zero-head representer -> rep = 0
  IBModel zero_head = m;
  std::string last = std::to_string(m.rep_dims.size() - 2);
  for (float& v : zero_head.rep.at(last + ".w").data) v = 0.0f;
  for (float& v : zero_head.rep.at(last + ".b").data) v = 0.0f;
  IBLoss lz = ib_loss(zero_head, x, y, eps);
  CHECK(lz.rep == 0.0f);
  CHECK(lz.total == lz.app);
}

TEST_CASE("ib_loss full-model finite differences") {
  ModelDims dims;
  dims.rep_hidden = {8};
  dims.app_hidden = {6};
  dims.latent_dim = 3;
  IBModel m = make_ib_model(5, 3, dims, 0.2f, 9);
  Rng rng(31);
  Tensor x = testutil::random_tensor({2, 5}, rng);
  std::vector<std::uint32_t> y = {0, 2};
  Tensor eps = testutil::random_tensor({2, 3}, rng);

  Tape tape;
  BoundParams rep = bind_params(tape, m.rep);
  BoundParams app = bind_params(tape, m.app);
  IBLossNodes nodes = ib_loss_nodes(tape, m, rep, app, tape.leaf(x), y, eps);
  tape.backward(nodes.total);
  std::map<std::string, Tensor> rep_grads = collect_grads(tape, rep);
  std::map<std::string, Tensor> app_grads = collect_grads(tape, app);

  auto loss = [&] {
    testutil::F64Result r = testutil::ib_loss_f64(m, x, y, eps);
    return testutil::FdEval{r.value, r.activation_sig};
  };
  auto rep_report = testutil::check_gradients(
      m.rep, loss,
      [&](const std::string& n, std::size_t i) { return (double)rep_grads.at(n).data[i]; });
  CHECK(rep_report.checked > 20);
  CHECK(rep_report.failed == 0);
  auto app_report = testutil::check_gradients(
      m.app, loss,
      [&](const std::string& n, std::size_t i) { return (double)app_grads.at(n).data[i]; });
  CHECK(app_report.checked > 10);
  CHECK(app_report.failed == 0);
}

TEST_CASE("rep additivity over disjoint equal-size batches") {
  ModelDims dims = tiny_dims();
  IBModel m = make_ib_model(6, 3, dims, 0.1f, 23);
  Rng rng(6);
  Tensor a = testutil::random_tensor({8, 6}, rng);
  Tensor b = testutil::random_tensor({8, 6}, rng);
  Tensor both = Tensor::zeros({16, 6});
  std::copy(a.data.begin(), a.data.end(), both.data.begin());
  std::copy(b.data.begin(), b.data.end(), both.data.begin() + a.data.size());
  float rep_a = kl_to_standard_normal(encode(m, a));
  float rep_b = kl_to_standard_normal(encode(m, b));
  float rep_ab = kl_to_standard_normal(encode(m, both));
  CHECK(std::abs(rep_ab - 0.5f * (rep_a + rep_b)) <= 1e-5f * std::max(1.0f, rep_ab));
}

TEST_CASE("train_ib: blob convergence, determinism, beta ordering") {
  LabeledSet blobs = synth_blobs(19, 200, 2, 36);
  ModelDims dims;
  dims.rep_hidden = {32};
  dims.app_hidden = {16};
  dims.latent_dim = 8;

  TrainConfig cfg;
  cfg.beta = 1e-3f;
  cfg.epochs = 12;
  cfg.batch_size = 20;
  cfg.learning_rate = 1e-3f;
  cfg.seed = 5;

  TrainTrace trace;
  IBModel m = train_ib(blobs, cfg, dims, &trace);
  CHECK(trace.epochs.back().train_accuracy >= 0.95);
  CHECK(trace.sample_grads == static_cast<std::uint64_t>(cfg.epochs) * blobs.size());

  IBModel m2 = train_ib(blobs, cfg, dims);
  CHECK(models_equal(m, m2));  // same seed -> bit-identical

  TrainConfig big = cfg;
  big.beta = 10.0f;
  TrainTrace trace_big;
  IBModel mb = train_ib(blobs, big, dims, &trace_big);
  CHECK(trace_big.epochs.back().rep < trace.epochs.back().rep);
}

TEST_CASE("trained KLD-to-prior never increases with beta (3-point grid)") {
  LabeledSet blobs = synth_blobs(29, 200, 2, 36);
  ModelDims dims;
  dims.rep_hidden = {32};
  dims.app_hidden = {16};
  dims.latent_dim = 8;
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 5;

  double prev = 1e300;
  for (float beta : {0.0f, 0.01f, 1.0f}) {
    TrainConfig c = cfg;
    c.beta = beta;
    TrainTrace trace;
    train_ib(blobs, c, dims, &trace);
    CHECK(trace.epochs.back().rep <= prev + 1e-9);
    prev = trace.epochs.back().rep;
  }
}

TEST_CASE("model checkpoint round trip preserves everything") {
  ModelDims dims = tiny_dims();
  IBModel m = make_ib_model(6, 3, dims, 0.25f, 77);
  auto tensors = model_to_tensors(m);
  CHECK(tensors.count("meta.beta") == 1);
  CHECK(tensors.count("meta.K") == 1);
  IBModel back = model_from_tensors(tensors);
  CHECK(models_equal(m, back));
  CHECK(back.beta == m.beta);
  CHECK(back.latent_dim == m.latent_dim);
  CHECK(back.class_count == m.class_count);
  CHECK(back.rep_dims == m.rep_dims);
}

TEST_CASE("train_ib rejects bad configs") {
  LabeledSet blobs = synth_blobs(1, 20, 2, 9);
  ModelDims dims = tiny_dims();
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_ib(blobs, cfg, dims), InputError);
}
