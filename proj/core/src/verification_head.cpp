#include "mkbd/verification_head.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "binary_io.hpp"

namespace mkbd {

HeadParameters HeadParameters::zeros(std::size_t d, std::size_t h) {
  HeadParameters p;
  p.d = d;
  p.h = h;
  p.w1.assign(d * h, 0.0);
  p.b1.assign(h, 0.0);
  p.w2.assign(h, 0.0);
  return p;
}

void HeadParameters::validate() const {
  if (d == 0 || h == 0) throw ShapeError("head dimensions must be positive");
  if (w1.size() != d * h || b1.size() != h || w2.size() != h) {
    throw ShapeError("head parameter shapes inconsistent with d=" + std::to_string(d) + ", h=" + std::to_string(h));
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(w1) || !finite(b1) || !finite(w2) || !std::isfinite(b2)) {
    throw NumericError("head parameters contain non-finite values");
  }
}

AdamState AdamState::zeros_like(const HeadParameters& params) {
  return {HeadParameters::zeros(params.d, params.h), HeadParameters::zeros(params.d, params.h), 0};
}

namespace {

template <typename T>
std::vector<double> abs_diff(std::span<const T> x, std::span<const T> y) {
  if (x.size() != y.size()) {
    throw ShapeError("cannot combine embeddings of length " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()));
  }
  std::vector<double> delta(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    delta[i] = std::fabs(static_cast<double>(x[i]) - static_cast<double>(y[i]));
  }
  return delta;
}

}  // namespace

std::vector<double> combine(std::span<const float> x, std::span<const float> y) { return abs_diff(x, y); }
std::vector<double> combine(std::span<const double> x, std::span<const double> y) { return abs_diff(x, y); }

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void forward_into(const HeadParameters& params, std::span<const double> delta, ForwardTrace& trace) {
  if (delta.size() != params.d) {
    throw ShapeError("head expects input of length " + std::to_string(params.d) + ", got " +
                     std::to_string(delta.size()));
  }
  const std::size_t d = params.d;
  const std::size_t h = params.h;
  trace.delta.assign(delta.begin(), delta.end());
  trace.pre_act.resize(h);
  trace.hidden.resize(h);

  double logit = params.b2;
  const double* in = delta.data();
  for (std::size_t j = 0; j < h; ++j) {
    const double* row = params.w1.data() + j * d;
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += row[i] * in[i];
    acc += params.b1[j];
    trace.pre_act[j] = acc;
    const double act = acc > 0.0 ? acc : 0.0;
    trace.hidden[j] = act;
    logit += params.w2[j] * act;
  }
  if (!std::isfinite(logit)) throw NumericError("non-finite logit in forward pass");
  trace.logit = logit;
  trace.prob = std::clamp(sigmoid(logit), kProbClamp, 1.0 - kProbClamp);
}

ForwardTrace forward(const HeadParameters& params, std::span<const double> delta) {
  ForwardTrace trace;
  forward_into(params, delta, trace);
  return trace;
}

double ce_term(double prob, bool label) noexcept {
  const double p = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  return label ? -std::log(p) : -std::log1p(-p);
}

double ce_loss(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  if (probs.size() != labels.size()) throw ShapeError("ce_loss: probs and labels differ in length");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) loss += ce_term(probs[i], labels[i] != 0);
  return loss;
}

void accumulate_backward(const HeadParameters& params, const ForwardTrace& trace, bool label, double scale,
                         HeadParameters& grads) {
  const std::size_t d = params.d;
  const double dlogit = scale * (trace.prob - (label ? 1.0 : 0.0));
  grads.b2 += dlogit;
  for (std::size_t j = 0; j < params.h; ++j) {
    grads.w2[j] += dlogit * trace.hidden[j];
    // ReLU subgradient at exactly 0 is 0.
    if (!(trace.pre_act[j] > 0.0)) continue;
    const double dpre = dlogit * params.w2[j];
    grads.b1[j] += dpre;
    double* row = grads.w1.data() + j * d;
    const double* in = trace.delta.data();
    for (std::size_t i = 0; i < d; ++i) row[i] += dpre * in[i];
  }
}

HeadParameters backward(const HeadParameters& params, const ForwardTrace& trace, bool label) {
  auto grads = HeadParameters::zeros(params.d, params.h);
  accumulate_backward(params, trace, label, 1.0, grads);
  return grads;
}

namespace {

void adam_update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                 std::vector<double>& v, double decay, double lr, const AdamConfig& cfg, double bc1, double bc2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] *= decay;
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

}  // namespace

void adam_step(HeadParameters& params, const HeadParameters& grads, AdamState& state, const AdamConfig& cfg) {
  if (grads.d != params.d || grads.h != params.h || state.first_moment.d != params.d ||
      state.first_moment.h != params.h) {
    throw ShapeError("adam_step: parameter, gradient and state shapes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;

  auto& m = state.first_moment;
  auto& v = state.second_moment;
  adam_update(params.w1, grads.w1, m.w1, v.w1, decay, cfg.lr, cfg, bc1, bc2);
  adam_update(params.w2, grads.w2, m.w2, v.w2, decay, cfg.lr, cfg, bc1, bc2);
  adam_update(params.b1, grads.b1, m.b1, v.b1, 1.0, cfg.lr, cfg, bc1, bc2);

  std::vector<double> b2{params.b2}, gb2{grads.b2}, mb2{m.b2}, vb2{v.b2};
  adam_update(b2, gb2, mb2, vb2, 1.0, cfg.lr, cfg, bc1, bc2);
  params.b2 = b2[0];
  m.b2 = mb2[0];
  v.b2 = vb2[0];
}

HeadParameters init_params(std::size_t d, std::size_t h, std::uint64_t seed) {
  if (d == 0 || h == 0) throw ConfigError("head dimensions must be positive");
  auto p = HeadParameters::zeros(d, h);
  Rng rng = make_rng(seed, streams::kInit);
  std::normal_distribution<double> layer1(0.0, std::sqrt(2.0 / static_cast<double>(d)));
  std::normal_distribution<double> layer2(0.0, std::sqrt(2.0 / static_cast<double>(h)));
  for (auto& w : p.w1) w = layer1(rng);
  for (auto& w : p.w2) w = layer2(rng);
  return p;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto& p = ckpt.params;
  p.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("MKHD", 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.d));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.h));
  for (double w : p.w1) detail::put_le(out, w);
  for (double b : p.b1) detail::put_le(out, b);
  for (double w : p.w2) detail::put_le(out, w);
  detail::put_le(out, p.b2);
  detail::put_le<std::uint64_t>(out, ckpt.step);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  detail::LeReader reader(in, "checkpoint " + path.filename().string());
  reader.expect_magic("MKHD");
  const auto version_offset = reader.offset();
  const auto version = reader.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_offset);
  }
  const auto dims_offset = reader.offset();
  const auto d = reader.get<std::uint32_t>("d");
  const auto h = reader.get<std::uint32_t>("h");
  if (d == 0 || h == 0) throw FormatError("checkpoint declares a zero dimension", dims_offset);

  Checkpoint ckpt;
  ckpt.params = HeadParameters::zeros(d, h);
  auto& p = ckpt.params;
  for (auto& w : p.w1) w = reader.get<double>("w1");
  for (auto& b : p.b1) b = reader.get<double>("b1");
  for (auto& w : p.w2) w = reader.get<double>("w2");
  p.b2 = reader.get<double>("b2");
  ckpt.step = reader.get<std::uint64_t>("step count");
  reader.expect_end();
  p.validate();
  return ckpt;
}

}  // namespace mkbd
