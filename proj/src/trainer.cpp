#include "infopart/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numbers>
#include <sstream>

#include "infopart/io.hpp"
#include "infopart/seed.hpp"

namespace infopart {

int TrainerConfig::total_steps() const {
  return static_cast<int>(std::lround(static_cast<double>(base_steps) / anneal_multiplier));
}

void TrainerConfig::validate() const {
  require(L >= 1, "L must be >= 1");
  require(resolved_ref_index() >= 0 && resolved_ref_index() < L, "ref_index must lie in [0, L-1]");
  require(batch_size >= 2, "batch_size must be >= 2");
  require(beta_start > beta_end && beta_end > 0.0, "need beta_start > beta_end > 0");
  require(base_steps >= 1, "base_steps must be >= 1");
  require(anneal_multiplier > 0.0, "anneal_multiplier must be > 0");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(training_pool_length >= static_cast<std::size_t>(L), "training pool shorter than a window");
  require(bottleneck_dim >= 1 && alphabet_size >= 2 && embedding_dim >= 1, "bad network dimensions");
  require(mi_batch >= 2 && running_window >= 1 && noise_count >= 1, "bad monitoring settings");
  require(max_steps >= 0, "max_steps must be >= 0");
}

double beta_at(const TrainerConfig& config, int step) {
  const int total = config.total_steps();
  require(step >= 0 && step <= total, "step outside the annealing schedule");
  return config.beta_start * std::pow(config.beta_end / config.beta_start,
                                      static_cast<double>(step) / static_cast<double>(total));
}

template <class T>
MiEstimate mi_bounds(const GaussianPosterior<T>& posteriors, const Tensor2D<T>& samples) {
  const Eigen::Index b = posteriors.mean.rows(), k = posteriors.mean.cols();
  require(b >= 2, "MI bounds need a batch of at least 2");
  require(samples.rows() == b && samples.cols() == k, "samples must match the posteriors");
  const Tensor2D<double> mu = posteriors.mean.template cast<double>();
  const Tensor2D<double> lv = posteriors.log_variance.template cast<double>();
  const Tensor2D<double> prec = (-lv.array()).exp().matrix();
  const Tensor2D<double> u = samples.template cast<double>();
  // log p(u_i | x_j) = -0.5 sum_d [ln 2pi + lv_jd + (u_id - mu_jd)^2 / var_jd]
  const ColVector<double> norm =
      -0.5 * (lv.rowwise().sum().array() + static_cast<double>(k) * std::log(2.0 * std::numbers::pi)).matrix();
  Tensor2D<double> logp(b, b);
  // (u - mu)^2 * prec expanded: u^2 prec - 2 u mu prec + mu^2 prec
  logp.noalias() = u.array().square().matrix() * prec.transpose();
  logp.noalias() -= 2.0 * u * (mu.array() * prec.array()).matrix().transpose();
  const RowVector<double> c = (mu.array().square() * prec.array()).matrix().rowwise().sum().transpose();
  logp.rowwise() += c;
  logp *= -0.5;
  logp.rowwise() += norm.transpose();

  double lower = 0.0, upper = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double self = logp(i, i);
    const double top = logp.row(i).maxCoeff();
    const double all = (logp.row(i).array() - top).exp().sum();
    const double rest = std::max(all - std::exp(self - top), 0.0);
    lower += self - (top + std::log(all / static_cast<double>(b)));
    upper += rest > 0.0 ? self - (top + std::log(rest / static_cast<double>(b - 1)))
                        : std::numeric_limits<double>::infinity();
  }
  return {lower / static_cast<double>(b) / std::numbers::ln2, upper / static_cast<double>(b) / std::numbers::ln2};
}

template <class T>
DibModel<T>::DibModel(const TrainerConfig& c, int state_dim, std::mt19937_64& rng)
    : encoder(state_dim * (c.frequencies + 1), c.encoder_hidden, 2 * c.bottleneck_dim, Activation::leaky_relu,
              Activation::linear, rng),
      quantizer(c.bottleneck_dim, c.quantizer_hidden, c.alphabet_size, Activation::leaky_relu, Activation::linear,
                rng),
      predictor(c.L * c.alphabet_size, c.predictor_hidden, c.embedding_dim, Activation::leaky_relu,
                Activation::linear, rng),
      reference(state_dim * (c.frequencies + 1), c.reference_hidden, c.embedding_dim, Activation::leaky_relu,
                Activation::linear, rng) {}

template <class T>
LossBreakdown DibModel<T>::evaluate(const TrainingBatch<T>& batch, double beta, bool with_gradients,
                                    int mi_rows) {
  const int B = batch.batch, L = batch.L;
  const auto rows = static_cast<Eigen::Index>(B) * L;
  require(batch.encoded_states.rows() == rows && batch.noise.rows() == rows && batch.encoded_refs.rows() == B,
          "batch shapes are inconsistent");

  const auto post = GaussianPosterior<T>::from_head(encoder.forward(batch.encoded_states));
  const Tensor2D<T> sample = reparameterize(post, batch.noise);
  const Tensor2D<T> probs = tempered_softmax(quantizer.forward(sample), 1.0);
  const int m = static_cast<int>(probs.cols());
  const Tensor2D<T> sequence = Eigen::Map<const Tensor2D<T>>(probs.data(), B, static_cast<Eigen::Index>(L) * m);
  const Tensor2D<T>& queries = predictor.forward(sequence);
  const Tensor2D<T>& keys = reference.forward(batch.encoded_refs);
  const auto nce = infonce_loss(queries, keys, with_gradients);

  // Batch-mean KL per position; the penalty squares each before summing.
  const ColVector<T> kl = gaussian_kl(post);
  std::vector<double> position_kl(static_cast<std::size_t>(L), 0.0);
  for (Eigen::Index r = 0; r < rows; ++r) position_kl[static_cast<std::size_t>(r % L)] += static_cast<double>(kl[r]);
  LossBreakdown out;
  for (auto& v : position_kl) {
    v /= static_cast<double>(B);
    out.kl_penalty += v * v;
    out.kl_nats_mean += v;
  }
  out.kl_nats_mean /= static_cast<double>(L);
  out.infonce_nats = nce.loss;
  out.total = nce.loss + beta * out.kl_penalty;

  if (mi_rows > 0) {
    const int n = std::min(mi_rows, B);
    GaussianPosterior<T> sub;
    sub.mean.resize(n, post.mean.cols());
    sub.log_variance.resize(n, post.mean.cols());
    Tensor2D<T> s(n, post.mean.cols());
    for (int b = 0; b < n; ++b) {
      const Eigen::Index r = static_cast<Eigen::Index>(b) * L;
      sub.mean.row(b) = post.mean.row(r);
      sub.log_variance.row(b) = post.log_variance.row(r);
      s.row(b) = sample.row(r);
    }
    out.mi = mi_bounds(sub, s);
  }

  if (!with_gradients) return out;
  for (auto* net : nets()) net->zero_grad();
  reference.backward(nce.d_keys);
  const Tensor2D<T> d_sequence = predictor.backward(nce.d_queries);
  const Tensor2D<T> d_probs = Eigen::Map<const Tensor2D<T>>(d_sequence.data(), rows, m);
  const Tensor2D<T> d_sample = quantizer.backward(tempered_softmax_backward(probs, d_probs, 1.0));
  Tensor2D<T> d_mean, d_lv, kl_mean, kl_lv;
  reparameterize_backward(post, batch.noise, d_sample, d_mean, d_lv);
  ColVector<T> weights(rows);
  for (Eigen::Index r = 0; r < rows; ++r)
    weights[r] = static_cast<T>(2.0 * beta * position_kl[static_cast<std::size_t>(r % L)] / static_cast<double>(B));
  gaussian_kl_backward(post, weights, kl_mean, kl_lv);
  encoder.backward(post.head_gradient(d_mean + kl_mean, d_lv + kl_lv));
  return out;
}

template <class T>
TrainingBatch<T> sample_batch(const Trajectory& pool, int batch, int L, int ref_index, int bottleneck_dim,
                              int frequencies, std::mt19937_64& rng) {
  const int d = pool.dim;
  require(pool.size() >= static_cast<std::size_t>(L), "pool shorter than a window");
  std::uniform_int_distribution<std::size_t> start(0, pool.size() - static_cast<std::size_t>(L));
  Tensor2D<double> states(static_cast<Eigen::Index>(batch) * L, d);
  Tensor2D<double> refs(batch, d);
  for (int b = 0; b < batch; ++b) {
    const std::size_t s = start(rng);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < d; ++j)
        states(static_cast<Eigen::Index>(b) * L + i, j) = pool.data[(s + static_cast<std::size_t>(i)) * d + j];
    for (int j = 0; j < d; ++j) refs(b, j) = pool.data[(s + static_cast<std::size_t>(ref_index)) * d + j];
  }
  TrainingBatch<T> out;
  out.batch = batch;
  out.L = L;
  out.encoded_states = positional_encode<T>(states, frequencies);
  out.encoded_refs = positional_encode<T>(refs, frequencies);
  std::normal_distribution<double> normal(0.0, 1.0);
  out.noise.resize(states.rows(), bottleneck_dim);
  for (Eigen::Index i = 0; i < out.noise.size(); ++i) out.noise.data()[i] = static_cast<T>(normal(rng));
  return out;
}

std::string stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::mi_threshold: return "mi_threshold";
    case StopReason::schedule_end: return "schedule_end";
    default: return "step_limit";
  }
}

namespace {

void write_snapshot(const TrainerConfig& config, DibModel<float>& model, int step, double beta,
                    const LossBreakdown& loss, const std::vector<StepLog>& curve) {
  if (config.diagnostic_dir.empty()) return;
  std::filesystem::create_directories(config.diagnostic_dir);
  std::ostringstream os;
  os << "step=" << step << "\nbeta=" << format_double(beta) << "\ninfonce_nats=" << format_double(loss.infonce_nats)
     << "\nkl_penalty=" << format_double(loss.kl_penalty) << "\n";
  const std::size_t from = curve.size() > 20 ? curve.size() - 20 : 0;
  for (std::size_t i = from; i < curve.size(); ++i)
    os << "# recent step " << curve[i].step << " infonce=" << format_double(curve[i].infonce_nats)
       << " kl=" << format_double(curve[i].kl_nats_mean) << "\n";
  os << trainer_config_text(config);
  write_file_atomic(config.diagnostic_dir / "nan_snapshot.txt", os.str());
  const char* names[] = {"encoder", "quantizer", "predictor", "reference"};
  const auto nets = model.nets();
  for (std::size_t i = 0; i < nets.size(); ++i)
    write_file_atomic(config.diagnostic_dir / (std::string("nan_snapshot_") + names[i] + ".json"),
                      network_to_json(*nets[i]));
}

}  // namespace

TrainingRun train(const TrainerConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainingRun run;
  run.config = config;
  const auto pool = generate_trajectory(config.map, config.training_pool_length,
                                        derive_seed(config.seed, "training_pool"));
  std::mt19937_64 init_rng(derive_seed(config.seed, "init"));
  std::mt19937_64 batch_rng(derive_seed(config.seed, "batches"));
  run.model = DibModel<float>(config, pool.dim, init_rng);
  std::vector<AdamState<float>> adam(4);
  for (auto& a : adam) a.hyper.learning_rate = config.learning_rate;

  const int schedule = config.total_steps();
  const int limit = config.max_steps > 0 ? std::min(config.max_steps, schedule) : schedule;
  std::deque<double> window;
  double window_sum = 0.0;
  run.stop_reason = limit < schedule ? StopReason::step_limit : StopReason::schedule_end;
  for (int step = 0; step < limit; ++step) {
    const double beta = config.fixed_beta.value_or(beta_at(config, step));
    const auto batch = sample_batch<float>(pool, config.batch_size, config.L, config.resolved_ref_index(),
                                           config.bottleneck_dim, config.frequencies, batch_rng);
    const auto loss = run.model.evaluate(batch, beta, true, config.mi_batch);
    if (!std::isfinite(loss.total)) {
      write_snapshot(config, run.model, step, beta, loss, run.curve);
      throw NumericError("non-finite training loss at step " + std::to_string(step) +
                         " (beta=" + format_double(beta) + ", infonce=" + format_double(loss.infonce_nats) +
                         ", kl_penalty=" + format_double(loss.kl_penalty) + ")" +
                         (config.diagnostic_dir.empty() ? std::string()
                                                        : "; snapshot in " + config.diagnostic_dir.string()));
    }
    const auto nets = run.model.nets();
    for (std::size_t i = 0; i < nets.size(); ++i) adam_step(adam[i], *nets[i]);
    run.curve.push_back({step, beta, loss.infonce_nats, loss.kl_nats_mean, loss.mi.lower_bits, loss.mi.upper_bits});

    window.push_back(loss.mi.lower_bits);
    window_sum += loss.mi.lower_bits;
    if (static_cast<int>(window.size()) > config.running_window) {
      window_sum -= window.front();
      window.pop_front();
    }
    if (static_cast<int>(window.size()) == config.running_window &&
        window_sum / static_cast<double>(config.running_window) >= config.stop_threshold_bits) {
      run.stop_reason = StopReason::mi_threshold;
      break;
    }
  }
  for (auto* net : run.model.nets()) net->clear_cache();
  run.partition = harden(run.model, pool.dim, config.noise_count, derive_seed(config.seed, "harden"),
                         config.frequencies);
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

Partition harden(const DibModel<float>& model, int state_dim, int noise_count, std::uint64_t seed,
                 int frequencies) {
  require(noise_count >= 1, "noise_count must be >= 1");
  NeuralPartition n;
  n.encoder = model.encoder;
  n.quantizer = model.quantizer;
  n.encoder.clear_cache();
  n.quantizer.clear_cache();
  n.state_dim = state_dim;
  n.frequencies = frequencies;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  n.noise.resize(noise_count, model.quantizer.in_dim());
  for (Eigen::Index i = 0; i < n.noise.size(); ++i) n.noise.data()[i] = static_cast<float>(normal(rng));
  auto p = Partition::neural(std::move(n));
  return Partition(p.variant(), p.alphabet_size(), seed);
}

std::string trainer_config_text(const TrainerConfig& c) {
  KeyValueConfig kv;
  map_to_config(c.map, kv);
  kv.set("L", std::to_string(c.L));
  kv.set("ref_index", std::to_string(c.resolved_ref_index()));
  kv.set("batch_size", std::to_string(c.batch_size));
  kv.set("beta_start", format_double(c.beta_start));
  kv.set("beta_end", format_double(c.beta_end));
  kv.set("base_steps", std::to_string(c.base_steps));
  kv.set("anneal_multiplier", format_double(c.anneal_multiplier));
  kv.set("learning_rate", format_double(c.learning_rate));
  kv.set("stop_threshold_bits", format_double(c.stop_threshold_bits));
  kv.set("seed", std::to_string(c.seed));
  kv.set("training_pool_length", std::to_string(c.training_pool_length));
  kv.set("mi_batch", std::to_string(c.mi_batch));
  kv.set("noise_count", std::to_string(c.noise_count));
  kv.set("max_steps", std::to_string(c.max_steps));
  if (c.fixed_beta) kv.set("fixed_beta", format_double(*c.fixed_beta));
  return kv.to_text();
}

template MiEstimate mi_bounds<float>(const GaussianPosterior<float>&, const Tensor2D<float>&);
template MiEstimate mi_bounds<double>(const GaussianPosterior<double>&, const Tensor2D<double>&);
template struct DibModel<float>;
template struct DibModel<double>;
template TrainingBatch<float> sample_batch<float>(const Trajectory&, int, int, int, int, int, std::mt19937_64&);
template TrainingBatch<double> sample_batch<double>(const Trajectory&, int, int, int, int, int, std::mt19937_64&);

}  // namespace infopart
