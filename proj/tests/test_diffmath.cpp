#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "crfu/autodiff.hpp"
#include "crfu/checkpoint.hpp"
#include "crfu/errors.hpp"
#include "crfu/optim.hpp"
#include "crfu/params.hpp"
#include "crfu/rng.hpp"
#include "crfu/tensor.hpp"
#include "oracles_f64.hpp"
#include "test_util.hpp"

using namespace crfu;

TEST_CASE("tensor shape/data invariant") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1, 2, 3}), DimensionError);
  Tensor t = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(t.size() == 4);
  CHECK(t.at(1, 0) == 3.0f);
  CHECK_THROWS_AS(ensure_finite(Tensor({1}, {NAN}), "t"), NumericError);
  CHECK_THROWS_AS(ensure_finite(Tensor({1}, {INFINITY}), "t"), NumericError);
}

TEST_CASE("rng determinism and substreams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng s1 = Rng::substream(42, "train");
  Rng s2 = Rng::substream(42, "poison");
  CHECK(s1.next_u64() != s2.next_u64());
  // normal() moments, loose
  Rng n(7);
  double sum = 0, sq = 0;
  const int cnt = 20000;
  for (int i = 0; i < cnt; ++i) {
    double v = n.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / cnt) < 0.03);
  CHECK(std::abs(sq / cnt - 1.0) < 0.05);
}

TEST_CASE("linear identity and hand computation") {
  Tape tape;
  NodeId x = tape.leaf(Tensor::matrix(1, 2, {1, 2}));
  NodeId w = tape.leaf(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  NodeId b = tape.leaf(Tensor({2}, {0, 0}));
  NodeId y = tape.linear(x, w, b);
  CHECK(tape.value(y).data == std::vector<float>{1, 2});

  Tape tape2;
  NodeId x2 = tape2.leaf(Tensor::matrix(1, 2, {1, 1}));
  NodeId w2 = tape2.leaf(Tensor::matrix(2, 2, {2, 0, 0, 3}));
  NodeId b2 = tape2.leaf(Tensor({2}, {1, 1}));
  CHECK(tape2.value(tape2.linear(x2, w2, b2)).data == std::vector<float>{3, 4});

  Tape bad;
  NodeId bx = bad.leaf(Tensor::matrix(1, 3, {1, 1, 1}));
  NodeId bw = bad.leaf(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  NodeId bb = bad.leaf(Tensor({2}, {0, 0}));
  CHECK_THROWS_AS(bad.linear(bx, bw, bb), DimensionError);
}

TEST_CASE("relu forward and subgradient at zero") {
  Tape tape;
  NodeId x = tape.leaf(Tensor::matrix(1, 3, {-1, 0, 2}));
  NodeId y = tape.relu(x);
  CHECK(tape.value(y).data == std::vector<float>{0, 0, 2});
  NodeId s = tape.sum(y);
  tape.backward(s);
  CHECK(tape.grad(x).data == std::vector<float>{0, 0, 1});  // grad at 0 is 0

  Tape neg;
  NodeId nx = neg.leaf(Tensor::matrix(1, 4, {-3, -2, -1, -0.5}));
  for (float v : neg.value(neg.relu(nx)).data) CHECK(v == 0.0f);
}

TEST_CASE("softmax cross entropy closed forms") {
  // uniform logits over C=4 -> ln 4
  Tape tape;
  NodeId logits = tape.leaf(Tensor::matrix(1, 4, {0.5, 0.5, 0.5, 0.5}));
  NodeId l = tape.softmax_cross_entropy(logits, {2});
  CHECK(tape.scalar_value(l) == doctest::Approx(std::log(4.0)).epsilon(1e-6));

  // saturated one-hot at the true label -> ~0
  Tape sat;
  NodeId slog = sat.leaf(Tensor::matrix(1, 3, {1e6f, 0, 0}));
  CHECK(sat.scalar_value(sat.softmax_cross_entropy(slog, {0})) == doctest::Approx(0.0).epsilon(1e-6));

  // random logits match the naive formula
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor raw = testutil::random_tensor({3, 5}, rng, 2.0f);
    std::vector<std::uint32_t> labels = {0, 3, 4};
    Tape t;
    float got = t.scalar_value(t.softmax_cross_entropy(t.leaf(raw), labels));
    double expect = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
      double denom = 0.0;
      for (std::size_t c = 0; c < 5; ++c) denom += std::exp(static_cast<double>(raw.at(r, c)));
      expect += -std::log(std::exp(static_cast<double>(raw.at(r, labels[r]))) / denom);
    }
    CHECK(got == doctest::Approx(expect / 3.0).epsilon(1e-5));
  }

  Tape bad;
  NodeId blog = bad.leaf(Tensor::matrix(1, 3, {0, 0, 0}));
  CHECK_THROWS_AS(bad.softmax_cross_entropy(blog, {3}), InputError);
}

TEST_CASE("backward basics: sum, zero-scaling, empty tape, non-scalar loss") {
  Tape tape;
  NodeId w = tape.leaf(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  NodeId s = tape.sum(w);
  tape.backward(s);
  for (float g : tape.grad(w).data) CHECK(g == 1.0f);

  // loss = 0 * f(W) -> zero gradients
  Tape z;
  NodeId zw = z.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  NodeId zl = z.scale(z.sum(z.relu(zw)), 0.0f);
  z.backward(zl);
  for (float g : z.grad(zw).data) CHECK(g == 0.0f);

  // unused parameters keep zero gradients
  Tape e;
  NodeId unused = e.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  NodeId c = e.leaf(Tensor::scalar(5.0f));
  e.backward(c);
  for (float g : e.grad(unused).data) CHECK(g == 0.0f);

  Tape ns;
  NodeId v = ns.leaf(Tensor::matrix(1, 2, {1, 2}));
  CHECK_THROWS_AS(ns.backward(v), ContractError);
}

namespace {

// Builds a 3-layer MLP loss over a ParamSet and returns scalar loss value;
// used for both analytic gradients and FD re-evaluation.
struct MlpHarness {
  ParamSet params;
  Tensor x;
  std::vector<std::uint32_t> labels;

  MlpHarness(Rng& rng) {
    params.add("0.w", testutil::random_tensor({6, 8}, rng, 0.5f));
    params.add("0.b", testutil::random_tensor({8}, rng, 0.1f));
    params.add("1.w", testutil::random_tensor({8, 5}, rng, 0.5f));
    params.add("1.b", testutil::random_tensor({5}, rng, 0.1f));
    params.add("2.w", testutil::random_tensor({5, 3}, rng, 0.5f));
    params.add("2.b", testutil::random_tensor({3}, rng, 0.1f));
    x = testutil::random_tensor({4, 6}, rng);
    labels = {0, 2, 1, 2};
  }

  NodeId build(Tape& tape, std::map<std::string, NodeId>& ids) const {
    for (const auto& [name, t] : params.all()) ids.emplace(name, tape.leaf(t));
    NodeId h = tape.leaf(x);
    h = tape.relu(tape.linear(h, ids.at("0.w"), ids.at("0.b")));
    h = tape.relu(tape.linear(h, ids.at("1.w"), ids.at("1.b")));
    h = tape.linear(h, ids.at("2.w"), ids.at("2.b"));
    return tape.softmax_cross_entropy(h, labels);
  }

  testutil::FdEval oracle() const {
    testutil::F64Result r = testutil::mlp_xent_f64(params, {6, 8, 5, 3}, x, labels);
    return {r.value, r.activation_sig};
  }
};

}  // namespace

TEST_CASE("3-layer MLP gradients match central finite differences") {
  Rng rng(3);
  MlpHarness h(rng);

  Tape tape;
  std::map<std::string, NodeId> ids;
  NodeId loss = h.build(tape, ids);
  tape.backward(loss);
  std::map<std::string, Tensor> grads;
  for (auto& [name, id] : ids) grads.emplace(name, tape.grad(id));

  auto report = testutil::check_gradients(
      h.params, [&] { return h.oracle(); },
      [&](const std::string& name, std::size_t i) {
        return static_cast<double>(grads.at(name).data[i]);
      });
  CHECK(report.checked > 50);
  CHECK(report.failed == 0);
}

TEST_CASE("adam: zero gradients leave everything unchanged") {
  ParamSet params;
  params.add("w", Tensor::matrix(1, 2, {1.0f, -2.0f}));
  AdamState adam;
  std::map<std::string, Tensor> grads;
  grads.emplace("w", Tensor::zeros({1, 2}));
  adam.step(params, grads, 0.01f);
  CHECK(params.at("w").data == std::vector<float>{1.0f, -2.0f});
  for (float m : adam.first_moments().at("w").data) CHECK(m == 0.0f);
  for (float v : adam.second_moments().at("w").data) CHECK(v == 0.0f);
}

TEST_CASE("adam: first step magnitude is ~lr under constant unit gradient") {
  ParamSet params;
  params.add("w", Tensor::scalar(0.0f));
  AdamState adam;
  std::map<std::string, Tensor> grads;
  grads.emplace("w", Tensor::scalar(1.0f));
  adam.step(params, grads, 0.05f);
  CHECK(params.at("w").data[0] == doctest::Approx(-0.05).epsilon(1e-4));
  CHECK(adam.step_count() == 1);
}

TEST_CASE("adam: 100 steps on w^2 from w=1 converge toward 0") {
  ParamSet params;
  params.add("w", Tensor::scalar(1.0f));
  AdamState adam;
  for (int i = 0; i < 100; ++i) {
    std::map<std::string, Tensor> grads;
    grads.emplace("w", Tensor::scalar(2.0f * params.at("w").data[0]));
    adam.step(params, grads, 0.05f);
  }
  CHECK(std::abs(params.at("w").data[0]) < 0.2f);
}

TEST_CASE("adam: non-finite gradient names the parameter") {
  ParamSet params;
  params.add("rep.0.w", Tensor::scalar(1.0f));
  AdamState adam;
  std::map<std::string, Tensor> grads;
  grads.emplace("rep.0.w", Tensor::scalar(NAN));
  try {
    adam.step(params, grads, 0.01f);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("rep.0.w") != std::string::npos);
  }
}

TEST_CASE("paramset uniqueness and lookup") {
  ParamSet p;
  p.add("a", Tensor::scalar(1));
  CHECK_THROWS_AS(p.add("a", Tensor::scalar(2)), InputError);
  CHECK_THROWS_AS(p.at("missing"), InputError);
  CHECK(p.scalar_count() == 1);
}

TEST_CASE("checkpoint: exact byte layout and round trip") {
  std::map<std::string, Tensor> tensors;
  tensors.emplace("w", Tensor::matrix(1, 2, {1.0f, -2.0f}));
  std::vector<std::uint8_t> bytes = encode_checkpoint(tensors);
  // magic
  CHECK(bytes[0] == 'C');
  CHECK(bytes[1] == 'R');
  CHECK(bytes[2] == 'F');
  CHECK(bytes[3] == 'U');
  // version 1 LE, count 1 LE
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 1);
  // name length 1 LE, name 'w', rank 2, dims 1,2 LE
  CHECK(bytes[12] == 1);
  CHECK(bytes[14] == 'w');
  CHECK(bytes[15] == 2);
  CHECK(bytes[16] == 1);
  CHECK(bytes[20] == 2);
  // payload: 1.0f little-endian = 00 00 80 3f
  CHECK(bytes[24] == 0x00);
  CHECK(bytes[27] == 0x3f);

  auto back = decode_checkpoint(bytes);
  CHECK(back.at("w").shape == std::vector<std::size_t>{1, 2});
  CHECK(back.at("w").data == tensors.at("w").data);

  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  std::vector<std::uint8_t> truncated = encode_checkpoint(tensors);
  truncated.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
}

TEST_CASE("checkpoint: file round trip preserves bits") {
  Rng rng(5);
  std::map<std::string, Tensor> tensors;
  tensors.emplace("rep.0.w", testutil::random_tensor({7, 3}, rng));
  tensors.emplace("app.0.b", testutil::random_tensor({4}, rng));
  tensors.emplace("meta.beta", Tensor::scalar(1e-3f));
  std::string path = (std::filesystem::temp_directory_path() / "crfu_ckpt_test.ckpt").string();
  save_checkpoint(path, tensors);
  auto back = load_checkpoint(path);
  CHECK(back.size() == tensors.size());
  for (const auto& [name, t] : tensors) {
    CHECK(back.at(name).shape == t.shape);
    CHECK(back.at(name).data == t.data);
  }
  std::filesystem::remove(path);
}
