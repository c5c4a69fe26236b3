#include <doctest.h>

#include <cmath>
#include <random>

#include "gradient_checks.hpp"
#include "infopart/io.hpp"
#include "infopart/trainer.hpp"

using namespace infopart;

TEST_CASE("geometric annealing schedule") {
  TrainerConfig c;
  c.base_steps = 20000;
  CHECK(beta_at(c, 0) == doctest::Approx(10.0));
  CHECK(beta_at(c, 20000) == doctest::Approx(1e-4));
  CHECK(beta_at(c, 10000) == doctest::Approx(std::sqrt(10.0 * 1e-4)));
  CHECK(beta_at(c, 5000) / beta_at(c, 0) == doctest::Approx(beta_at(c, 15000) / beta_at(c, 10000)));
  c.anneal_multiplier = 0.5;
  CHECK(c.total_steps() == 40000);
  CHECK(beta_at(c, 20000) == doctest::Approx(std::sqrt(10.0 * 1e-4)));
  CHECK_THROWS_AS(beta_at(c, 40001), ContractError);
}

TEST_CASE("config validation") {
  TrainerConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.resolved_ref_index() == 6);
  c.ref_index = 12;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c.ref_index = 0;
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c.batch_size = 16;
  c.beta_end = 20.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("MI bounds") {
  std::mt19937_64 rng(3);
  SUBCASE("identical posteriors carry no information") {
    Tensor2D<double> head(64, 4);
    head.setZero();
    const auto p = GaussianPosterior<double>::from_head(head);
    const auto mi = mi_bounds(p, gradcheck::random_matrix(64, 2, rng));
    CHECK(mi.lower_bits == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mi.upper_bits == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("well separated posteriors saturate the lower bound at log2 B") {
    const int b = 32;
    Tensor2D<double> head(b, 2);
    for (int i = 0; i < b; ++i) {
      head(i, 0) = 10.0 * i;
      head(i, 1) = std::log(1e-2);
    }
    const auto p = GaussianPosterior<double>::from_head(head);
    const auto s = reparameterize(p, gradcheck::random_matrix(b, 1, rng));
    const auto mi = mi_bounds(p, s);
    CHECK(mi.lower_bits == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(mi.upper_bits > 20.0);
  }
  SUBCASE("Gaussian channel is bracketed") {
    // U = X + noise, X ~ N(0, 1), unit noise: I = 0.5 log2 2 = 0.5 bits.
    const int b = 256, reps = 40;
    double lower = 0.0, upper = 0.0;
    for (int r = 0; r < reps; ++r) {
      Tensor2D<double> head(b, 2);
      head.col(0) = gradcheck::random_matrix(b, 1, rng);
      head.col(1).setZero();
      const auto p = GaussianPosterior<double>::from_head(head);
      const auto mi = mi_bounds(p, reparameterize(p, gradcheck::random_matrix(b, 1, rng)));
      CHECK(mi.lower_bits <= mi.upper_bits);
      lower += mi.lower_bits / reps;
      upper += mi.upper_bits / reps;
    }
    CHECK(lower <= 0.5 + 0.02);
    CHECK(upper >= 0.5 - 0.02);
    CHECK(upper - lower < 0.1);
  }
}

TEST_CASE("sampled batches") {
  const auto pool = generate_trajectory(MapSpec::henon(), 1000, 1);
  std::mt19937_64 a(5), b(5);
  const auto x = sample_batch<double>(pool, 8, 3, 1, 4, 10, a);
  const auto y = sample_batch<double>(pool, 8, 3, 1, 4, 10, b);
  CHECK(x.encoded_states == y.encoded_states);
  CHECK(x.noise == y.noise);
  CHECK(x.encoded_states.rows() == 24);
  CHECK(x.encoded_states.cols() == 22);
  CHECK(x.noise.cols() == 4);
  // The reference is the window's state at ref_index.
  for (int r = 0; r < 8; ++r) CHECK(x.encoded_refs.row(r) == x.encoded_states.row(r * 3 + 1));
}

TEST_CASE("end-to-end loss gradient on the miniature configuration") {
  for (const auto& map : {MapSpec::logistic(), MapSpec::henon()}) {
    for (std::uint64_t seed : {1, 2}) {
      const auto r = gradcheck::full_loss(map, seed);
      INFO(r.name << " seed " << seed << " max error " << r.max_error);
      CHECK(r.passed());
    }
  }
}

TEST_CASE("short training run is deterministic and yields a hard partition") {
  auto c = gradcheck::tiny_config(MapSpec::henon());
  c.batch_size = 32;
  c.L = 3;
  c.mi_batch = 16;
  c.running_window = 5;
  c.base_steps = 40;
  c.training_pool_length = 5000;
  c.noise_count = 8;
  c.seed = 11;
  const auto a = train(c);
  const auto b = train(c);
  REQUIRE(a.steps() == 40);
  CHECK(a.stop_reason == StopReason::schedule_end);
  for (int i = 0; i < a.steps(); ++i) {
    CHECK(a.curve[static_cast<std::size_t>(i)].infonce_nats == b.curve[static_cast<std::size_t>(i)].infonce_nats);
    CHECK(a.curve[static_cast<std::size_t>(i)].beta == doctest::Approx(beta_at(c, i)));
  }
  REQUIRE(a.partition.has_value());
  CHECK(a.partition->alphabet_size() == 2);
  const auto t = generate_trajectory(c.map, 2000, 4);
  const auto s1 = symbolize(*a.partition, t);
  CHECK(s1.symbols == symbolize(*b.partition, t).symbols);
  CHECK(s1.symbols == symbolize(*a.partition, t).symbols);

  c.max_steps = 10;
  const auto limited = train(c);
  CHECK(limited.steps() == 10);
  CHECK(limited.stop_reason == StopReason::step_limit);

  const auto text = trainer_config_text(c);
  CHECK(text.find("map=henon") != std::string::npos);
  CHECK(text.find("L=3") != std::string::npos);
}

TEST_CASE("hardened partitions survive serialization") {
  auto c = gradcheck::tiny_config(MapSpec::ikeda());
  std::mt19937_64 rng(8);
  const DibModel<float> model(c, 2, rng);
  const auto p = harden(model, 2, 16, 99, c.frequencies);
  const auto q = partition_from_json(partition_to_json(p));
  const auto t = generate_trajectory(c.map, 3000, 1);
  CHECK(symbolize(p, t).symbols == symbolize(q, t).symbols);
  CHECK(q.creation_seed() == 99);
  // Same seed, same noise vectors.
  CHECK(symbolize(harden(model, 2, 16, 99, c.frequencies), t).symbols == symbolize(p, t).symbols);
}
