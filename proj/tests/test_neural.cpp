#include <doctest.h>

#include <cmath>
#include <random>

#include "gradient_checks.hpp"
#include "infopart/io.hpp"
#include "infopart/neural.hpp"

using namespace infopart;

TEST_CASE("gradients match finite differences") {
  for (const auto& r : gradcheck::run_all(3)) {
    INFO(r.name << " max error " << r.max_error);
    CHECK(r.passed());
  }
}

TEST_CASE("positional encoding") {
  const auto e = positional_encode(std::vector<double>{0.3});
  REQUIRE(e.size() == 11);
  CHECK(e[0] == 0.3);
  for (int k = 1; k <= 10; ++k) CHECK(e[static_cast<std::size_t>(k)] == doctest::Approx(std::sin(std::ldexp(0.3, k))));

  const auto two = positional_encode(std::vector<double>{0.3, -1.1});
  REQUIRE(two.size() == 22);
  CHECK(two[11] == -1.1);
  CHECK(two[12] == doctest::Approx(std::sin(-2.2)));
}

TEST_CASE("forward and infer agree") {
  std::mt19937_64 rng(4);
  DenseNet<double> net(3, {8}, 2, Activation::leaky_relu, Activation::linear, rng);
  const auto x = gradcheck::random_matrix(10, 3, rng);
  const Tensor2D<double> a = net.forward(x);
  CHECK(a.isApprox(net.infer(x)));
  CHECK(net.parameter_count() == 3 * 8 + 8 + 8 * 2 + 2);
  CHECK_THROWS_AS(net.infer(gradcheck::random_matrix(2, 4, rng)), ContractError);

  std::vector<DenseLayer<double>> bad(2);
  bad[0].weight.resize(3, 4);
  bad[0].bias.resize(4);
  bad[1].weight.resize(5, 2);
  bad[1].bias.resize(2);
  CHECK_THROWS_AS(DenseNet<double>::from_layers(bad), ContractError);
}

TEST_CASE("leaky rectifier slope") {
  DenseLayer<double> l;
  l.weight = Tensor2D<double>::Identity(2, 2);
  l.bias = RowVector<double>::Zero(2);
  l.activation = Activation::leaky_relu;
  const auto net = DenseNet<double>::from_layers({l});
  Tensor2D<double> x(1, 2);
  x << -2.0, 3.0;
  const auto y = net.infer(x);
  CHECK(y(0, 0) == doctest::Approx(-2.0 * kLeakySlope));
  CHECK(y(0, 1) == doctest::Approx(3.0));
}

TEST_CASE("network JSON round trip") {
  std::mt19937_64 rng(2);
  DenseNet<float> net(4, {5, 3}, 2, Activation::leaky_relu, Activation::linear, rng);
  const auto back = network_from_json<float>(network_to_json(net));
  const Tensor2D<float> x = gradcheck::random_matrix(3, 4, rng).cast<float>();
  CHECK(back.infer(x) == net.infer(x));
  CHECK_THROWS_AS(network_from_json<double>(network_to_json(net)), ContractError);
}

TEST_CASE("Adam") {
  std::mt19937_64 rng(1);
  SUBCASE("zero gradient leaves parameters unchanged") {
    DenseNet<double> net(3, {4}, 2, Activation::tanh, Activation::linear, rng);
    const auto before = net.layers()[0].weight;
    AdamState<double> st;
    net.zero_grad();
    for (int i = 0; i < 5; ++i) adam_step(st, net);
    CHECK(net.layers()[0].weight == before);
  }
  SUBCASE("first step moves each parameter by the learning rate") {
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -7.0, 1e-3};
    AdamState<double> st;
    st.hyper.learning_rate = 1e-2;
    adam_step(st, {std::span<double>(p)}, {std::span<const double>(g)});
    CHECK(p[0] == doctest::Approx(1.0 - 1e-2).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(-2.0 + 1e-2).epsilon(1e-6));
    CHECK(p[2] == doctest::Approx(0.5 - 1e-2).epsilon(1e-3));
  }
  SUBCASE("minimizes a quadratic") {
    std::vector<double> p{3.0, -4.0};
    AdamState<double> st;
    st.hyper.learning_rate = 0.05;
    for (int i = 0; i < 3000; ++i) {
      const std::vector<double> g{2 * p[0], 2 * p[1]};
      adam_step(st, {std::span<double>(p)}, {std::span<const double>(g)});
    }
    CHECK(std::abs(p[0]) < 1e-2);
    CHECK(std::abs(p[1]) < 1e-2);
  }
}

TEST_CASE("Gaussian posterior and KL") {
  Tensor2D<double> head(3, 2);
  head << 0.0, 0.0,  //
      1.0, 0.0,      //
      0.5, 20.0;     // log-variance clamps
  const auto p = GaussianPosterior<double>::from_head(head);
  CHECK(p.log_variance(2, 0) == kLogVarianceMax);
  CHECK(p.clamp_mask(2, 0) == 0.0);
  const auto kl = gaussian_kl(p);
  CHECK(kl[0] == doctest::Approx(0.0));
  CHECK(kl[1] == doctest::Approx(0.5));
  CHECK(kl[2] == doctest::Approx(0.5 * (0.25 + std::exp(10.0) - 1 - 10)));
  CHECK_THROWS_AS(GaussianPosterior<double>::from_head(Tensor2D<double>(2, 3)), ContractError);
}

TEST_CASE("reparameterized samples have the posterior moments") {
  const int n = 200'000;
  Tensor2D<double> head(n, 2);
  head.col(0).setConstant(0.7);
  head.col(1).setConstant(std::log(0.25));
  const auto p = GaussianPosterior<double>::from_head(head);
  std::mt19937_64 rng(5);
  const auto s = reparameterize(p, gradcheck::random_matrix(n, 1, rng));
  const double mean = s.mean();
  const double var = (s.array() - mean).square().sum() / (n - 1);
  CHECK(mean == doctest::Approx(0.7).epsilon(0.01));
  CHECK(var == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("tempered softmax") {
  const auto p = tempered_softmax(std::vector<double>{1.0, 2.0, 3.0}, 1.0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p[2] == doctest::Approx(std::exp(3.0) / z));
  const auto half = tempered_softmax(std::vector<double>{1.0, 2.0, 3.0}, 0.5);
  const auto scaled = tempered_softmax(std::vector<double>{2.0, 4.0, 6.0}, 1.0);
  for (int i = 0; i < 3; ++i) CHECK(half[static_cast<std::size_t>(i)] == doctest::Approx(scaled[static_cast<std::size_t>(i)]));

  const auto hard = tempered_softmax(std::vector<double>{0.1, 5.0, 5.0}, 0.0);
  CHECK(hard == std::vector<double>{0.0, 1.0, 0.0});
  CHECK_THROWS_AS(tempered_softmax(std::vector<double>{1.0}, -1.0), ContractError);

  // Huge logits stay finite.
  const auto big = tempered_softmax(std::vector<double>{1000.0, 0.0}, 1.0);
  CHECK(big[0] == doctest::Approx(1.0));
}

TEST_CASE("InfoNCE") {
  SUBCASE("uninformative queries give ln B") {
    const Tensor2D<double> q = Tensor2D<double>::Zero(8, 3);
    const Tensor2D<double> k = Tensor2D<double>::Zero(8, 3);
    const auto r = infonce_loss(q, k);
    CHECK(r.loss == doctest::Approx(std::log(8.0)));
    CHECK(r.mi_lower_bound_bits() == doctest::Approx(0.0));
  }
  SUBCASE("well separated positives give zero loss") {
    Tensor2D<double> q = 100.0 * Tensor2D<double>::Identity(4, 4);
    const auto r = infonce_loss(q, q);
    CHECK(r.loss == doctest::Approx(0.0));
    CHECK(r.mi_lower_bound_bits() == doctest::Approx(2.0));
  }
  SUBCASE("two-row example") {
    Tensor2D<double> q(2, 1), k(2, 1);
    q << 0.0, 1.0;
    k << 0.0, 1.0;
    // each row: -log(1 / (1 + e^-1))
    CHECK(infonce_loss(q, k).loss == doctest::Approx(std::log(1 + std::exp(-1.0))));
  }
  SUBCASE("translation invariance") {
    std::mt19937_64 rng(7);
    Tensor2D<double> q = gradcheck::random_matrix(16, 5, rng);
    Tensor2D<double> k = gradcheck::random_matrix(16, 5, rng);
    const double base = infonce_loss(q, k).loss;
    const RowVector<double> shift = gradcheck::random_matrix(1, 5, rng) * 10.0;
    q.rowwise() += shift;
    k.rowwise() += shift;
    CHECK(infonce_loss(q, k).loss == doctest::Approx(base).epsilon(1e-9));
  }
  SUBCASE("contract checks") {
    CHECK_THROWS_AS(infonce_loss(Tensor2D<double>(3, 2), Tensor2D<double>(3, 3)), ContractError);
    const Tensor2D<double> one = Tensor2D<double>::Zero(1, 2);
    CHECK_THROWS_AS(infonce_loss(one, one), ContractError);
  }
}
