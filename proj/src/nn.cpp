#include "tsm/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace tsm::nn {

Activation parse_activation(std::string_view name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) { return a == Activation::gelu ? "gelu" : "relu"; }

void ModelLayout::validate() const {
  std::ostringstream err;
  if (input_dim < 1) err << "input_dim must be at least 1; ";
  if (embed_dim < 2 || embed_dim % 2 != 0) err << "embed_dim must be a positive even number; ";
  if (hidden.empty()) err << "at least one hidden layer is required; ";
  for (std::size_t h : hidden) {
    if (h < 1) err << "hidden widths must be positive; ";
  }
  if (!err.str().empty()) throw std::invalid_argument("model layout: " + err.str());
}

std::size_t ModelLayout::parameter_count() const {
  std::size_t in = input_dim + embed_dim;
  std::size_t count = 0;
  for (std::size_t h : hidden) {
    count += h * in + h;
    in = h;
  }
  return count + input_dim * in + input_dim;
}

Vec time_embedding(double t, std::size_t embed_dim) {
  if (embed_dim == 0 || embed_dim % 2 != 0) throw std::invalid_argument("time_embedding: embed_dim must be even");
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("time_embedding: t outside [0, 1]");
  const std::size_t half = embed_dim / 2;
  Vec e(static_cast<Eigen::Index>(embed_dim));
  for (std::size_t k = 0; k < half; ++k) {
    const double w = 2.0 * std::numbers::pi *
                     std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(embed_dim));
    e[static_cast<Eigen::Index>(k)] = std::sin(w * t);
    e[static_cast<Eigen::Index>(half + k)] = std::cos(w * t);
  }
  return e;
}

namespace {

using ConstMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z * std::numbers::sqrt2 * 0.5)); }
double gelu_grad(double z) {
  const double cdf = 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 * 0.5));
  const double pdf = std::exp(-0.5 * z * z) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + z * pdf;
}

void activate(Activation a, const Mat& z, Mat& out) {
  out.resize(z.rows(), z.cols());
  if (a == Activation::gelu) {
    out = z.unaryExpr([](double v) { return gelu(v); });
  } else {
    out = z.cwiseMax(0.0);
  }
}

void activation_grad(Activation a, const Mat& z, Mat& inout) {
  if (a == Activation::gelu) {
    inout.array() *= z.unaryExpr([](double v) { return gelu_grad(v); }).array();
  } else {
    inout.array() *= (z.array() > 0.0).cast<double>();
  }
}

// Columns are samples: rows 0..d-1 hold x, the rest the time embedding.
Mat input_block(const ModelLayout& l, const Mat& x, std::span<const double> t) {
  if (static_cast<std::size_t>(x.cols()) != l.input_dim) {
    throw std::invalid_argument("model input has the wrong dimension");
  }
  if (static_cast<std::size_t>(x.rows()) != t.size()) {
    throw std::invalid_argument("model input: one time per row is required");
  }
  const auto d = static_cast<Eigen::Index>(l.input_dim);
  Mat in(d + static_cast<Eigen::Index>(l.embed_dim), x.rows());
  in.topRows(d) = x.transpose();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    in.col(i).tail(static_cast<Eigen::Index>(l.embed_dim)) = time_embedding(t[static_cast<std::size_t>(i)], l.embed_dim);
  }
  return in;
}

struct LayerView {
  std::size_t in;
  std::size_t out;
  std::size_t offset;  // start of W; b follows at offset + in * out
};

std::vector<LayerView> layer_views(const ModelLayout& l) {
  std::vector<LayerView> v;
  std::size_t in = l.input_dim + l.embed_dim;
  std::size_t off = 0;
  for (std::size_t h : l.hidden) {
    v.push_back({in, h, off});
    off += h * in + h;
    in = h;
  }
  v.push_back({in, l.input_dim, off});
  return v;
}

struct Tape {
  std::vector<Mat> pre;   // pre-activations of hidden layers
  std::vector<Mat> post;  // post[0] = input block, post[k+1] = act(pre[k])
  Mat out;
};

Tape run_forward(const ModelLayout& l, std::span<const double> params, Mat input) {
  const auto views = layer_views(l);
  Tape tape;
  tape.post.push_back(std::move(input));
  for (std::size_t k = 0; k < views.size(); ++k) {
    const auto& v = views[k];
    const ConstMap w(params.data() + v.offset, static_cast<Eigen::Index>(v.out), static_cast<Eigen::Index>(v.in));
    const Eigen::Map<const Vec> b(params.data() + v.offset + v.in * v.out, static_cast<Eigen::Index>(v.out));
    Mat z = w * tape.post.back();
    z.colwise() += b;
    if (k + 1 == views.size()) {
      tape.out = std::move(z);
    } else {
      Mat a;
      activate(l.activation, z, a);
      tape.pre.push_back(std::move(z));
      tape.post.push_back(std::move(a));
    }
  }
  return tape;
}

}  // namespace

ScoreModel::ScoreModel(ModelLayout layout) : layout_(std::move(layout)) {
  layout_.validate();
  params_.assign(layout_.parameter_count(), 0.0);
}

void ScoreModel::initialize(Rng& rng) {
  std::fill(params_.begin(), params_.end(), 0.0);
  for (const auto& v : layer_views(layout_)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(v.in));
    for (std::size_t i = 0; i < v.in * v.out; ++i) params_[v.offset + i] = rng.uniform(-bound, bound);
  }
}

Mat ScoreModel::forward_batch(const Mat& x, std::span<const double> t) const {
  return run_forward(layout_, params_, input_block(layout_, x, t)).out.transpose();
}

Mat ScoreModel::forward_batch(const Mat& x, double t) const {
  if (static_cast<std::size_t>(x.cols()) != layout_.input_dim) {
    throw std::invalid_argument("model input has the wrong dimension");
  }
  // One embedding shared by every column.
  const auto d = static_cast<Eigen::Index>(layout_.input_dim);
  Mat in(d + static_cast<Eigen::Index>(layout_.embed_dim), x.rows());
  in.topRows(d) = x.transpose();
  in.bottomRows(static_cast<Eigen::Index>(layout_.embed_dim)).colwise() = time_embedding(t, layout_.embed_dim);
  return run_forward(layout_, params_, std::move(in)).out.transpose();
}

Vec ScoreModel::forward(const Vec& x, double t) const {
  const double ts[1] = {t};
  return forward_batch(Mat(x.transpose()), ts).row(0).transpose();
}

LossAndGrad loss_and_grad(const ScoreModel& m, const Mat& x_t, std::span<const double> t,
                          const Mat& targets, std::span<const double> weights) {
  const ModelLayout& l = m.layout();
  const auto n = x_t.rows();
  if (n == 0) throw std::invalid_argument("loss_and_grad: empty batch");
  if (targets.rows() != n || targets.cols() != x_t.cols() || weights.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("loss_and_grad: batch pieces disagree in size");
  }
  const auto params = m.parameters();
  Tape tape = run_forward(l, params, input_block(l, x_t, t));

  LossAndGrad r;
  r.per_sample.resize(static_cast<std::size_t>(n));
  Mat delta = tape.out - targets.transpose();  // d x n
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights[static_cast<std::size_t>(i)];
    const double v = w * delta.col(i).squaredNorm();
    r.per_sample[static_cast<std::size_t>(i)] = v;
    total += v;
    delta.col(i) *= 2.0 * w / static_cast<double>(n);
  }
  r.loss = total / static_cast<double>(n);

  r.grad.assign(params.size(), 0.0);
  const auto views = layer_views(l);
  for (std::size_t k = views.size(); k-- > 0;) {
    const auto& v = views[k];
    const auto in = static_cast<Eigen::Index>(v.in);
    const auto out = static_cast<Eigen::Index>(v.out);
    MutMap gw(r.grad.data() + v.offset, out, in);
    Eigen::Map<Vec> gb(r.grad.data() + v.offset + v.in * v.out, out);
    gw.noalias() = delta * tape.post[k].transpose();
    gb = delta.rowwise().sum();
    if (k == 0) break;
    const ConstMap w(params.data() + v.offset, out, in);
    Mat up = w.transpose() * delta;
    activation_grad(l.activation, tape.pre[k - 1], up);
    delta = std::move(up);
  }
  return r;
}

LossAndGrad loss_and_grad(const ScoreModel& m, const Batch& batch, const ScoreTarget& target,
                          const NormalizedWeighting* weight) {
  const auto n = batch.x_t.rows();
  Mat targets(n, batch.x_t.cols());
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  const Schedule& sched = target.schedule();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = batch.t[static_cast<std::size_t>(i)];
    targets.row(i) = target.value(batch.x0.row(i).transpose(), batch.x_t.row(i).transpose(), t).transpose();
    if (weight) w[static_cast<std::size_t>(i)] = sched.span() * (*weight)(t);
  }
  return loss_and_grad(m, batch.x_t, batch.t, targets, w);
}

Batch draw_batch(const MixtureSpec& p0, const Schedule& sched, std::size_t size, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(size);
  const auto d = static_cast<Eigen::Index>(p0.dim);
  Batch b;
  b.x0 = sample(p0, rng, size);
  b.x_t.resize(n, d);
  b.t.resize(size);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = rng.uniform(sched.t_min, sched.t_max);
    const auto [alpha, sigma] = alpha_sigma(sched, t);
    b.t[static_cast<std::size_t>(i)] = t;
    for (Eigen::Index c = 0; c < d; ++c) b.x_t(i, c) = alpha * b.x0(i, c) + sigma * rng.normal();
  }
  return b;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {
  if (!(lr > 0.0)) throw std::invalid_argument("Adam: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("Adam: epsilon must be positive");
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw std::invalid_argument("Adam: size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void TrainConfig::validate() const {
  std::ostringstream err;
  if (!(learning_rate > 0.0)) err << "learning_rate must be positive; ";
  if (!(beta1 >= 0.0 && beta1 < 1.0)) err << "beta1 must lie in [0, 1); ";
  if (!(beta2 >= 0.0 && beta2 < 1.0)) err << "beta2 must lie in [0, 1); ";
  if (!(epsilon > 0.0)) err << "epsilon must be positive; ";
  if (batch_size < 1) err << "batch_size must be at least 1; ";
  if (t_bins < 1) err << "t_bins must be at least 1; ";
  if (!err.str().empty()) throw std::invalid_argument("train config: " + err.str());
  layout.validate();
}

std::vector<double> TrainHistory::bin_means(std::size_t from) const {
  std::vector<double> out(t_bins, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t b = 0; b < t_bins; ++b) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t it = from; it < total_loss.size(); ++it) {
      const double v = bin(it, b);
      if (std::isnan(v)) continue;
      acc += v;
      ++count;
    }
    if (count > 0) out[b] = acc / static_cast<double>(count);
  }
  return out;
}

TrainResult train(const MixtureSpec& p0, const Schedule& sched, const TrainConfig& cfg,
                  const TrainCallback& callback, std::size_t callback_every) {
  cfg.validate();
  p0.validate();
  sched.validate();
  if (p0.dim != cfg.layout.input_dim) {
    throw std::invalid_argument("train: target dimension does not match the model input_dim");
  }
  ScoreModel model(cfg.layout);
  Rng init_rng = Rng::substream(cfg.seed, {0});
  model.initialize(init_rng);
  Rng batch_rng = Rng::substream(cfg.seed, {1});

  const ScoreTarget target(cfg.kind, p0, sched);
  std::optional<NormalizedWeighting> weight;
  if (cfg.weighting) weight.emplace(*cfg.weighting, sched);
  Adam opt(model.parameters().size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  TrainHistory hist;
  hist.t_bins = cfg.t_bins;
  hist.total_loss.reserve(cfg.iterations);
  hist.bin_loss.reserve(cfg.iterations * cfg.t_bins);

  if (callback) callback(0, model);
  std::vector<double> bin_sum(cfg.t_bins);
  std::vector<std::size_t> bin_count(cfg.t_bins);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Batch batch = draw_batch(p0, sched, cfg.batch_size, batch_rng);
    LossAndGrad lg = loss_and_grad(model, batch, target, weight ? &*weight : nullptr);

    std::fill(bin_sum.begin(), bin_sum.end(), 0.0);
    std::fill(bin_count.begin(), bin_count.end(), 0);
    std::size_t bad_bin = cfg.t_bins;
    for (std::size_t i = 0; i < batch.t.size(); ++i) {
      const double u = (batch.t[i] - sched.t_min) / sched.span();
      const std::size_t b = std::min(cfg.t_bins - 1, static_cast<std::size_t>(u * static_cast<double>(cfg.t_bins)));
      bin_sum[b] += lg.per_sample[i];
      ++bin_count[b];
      if (!std::isfinite(lg.per_sample[i]) && bad_bin == cfg.t_bins) bad_bin = b;
    }
    if (!std::isfinite(lg.loss)) {
      std::ostringstream msg;
      msg << "non-finite training loss at iteration " << it;
      if (bad_bin < cfg.t_bins) msg << " (t-bin " << bad_bin << ")";
      throw DivergenceError(msg.str());
    }
    hist.total_loss.push_back(lg.loss);
    for (std::size_t b = 0; b < cfg.t_bins; ++b) {
      hist.bin_loss.push_back(bin_count[b] ? bin_sum[b] / static_cast<double>(bin_count[b])
                                           : std::numeric_limits<double>::quiet_NaN());
    }
    opt.step(model.parameters(), lg.grad);
    const std::size_t done = it + 1;
    if (callback && ((callback_every > 0 && done % callback_every == 0) || done == cfg.iterations)) {
      callback(done, model);
    }
  }
  return {std::move(model), std::move(hist)};
}

// ---- checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'T', 'S', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(U));
}

template <typename U>
U get(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw std::runtime_error("checkpoint truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ScoreModel& m, std::uint64_t iteration) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  const ModelLayout& l = m.layout();
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, l.input_dim);
  put<std::uint64_t>(os, l.embed_dim);
  put<std::uint64_t>(os, l.hidden.size());
  for (std::size_t h : l.hidden) put<std::uint64_t>(os, h);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(l.activation));
  put<std::uint64_t>(os, iteration);
  const auto params = m.parameters();
  put<std::uint64_t>(os, params.size());
  for (double p : params) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(p));
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

ScoreModel load_checkpoint(const std::filesystem::path& path, std::uint64_t* iteration) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kMagic)) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  ModelLayout l;
  l.input_dim = get<std::uint64_t>(is);
  l.embed_dim = get<std::uint64_t>(is);
  const auto depth = get<std::uint64_t>(is);
  if (depth > 1024) throw std::runtime_error("checkpoint layout is implausible");
  l.hidden.resize(depth);
  for (auto& h : l.hidden) h = get<std::uint64_t>(is);
  const auto act = get<std::uint32_t>(is);
  if (act > static_cast<std::uint32_t>(Activation::relu)) throw std::runtime_error("checkpoint: unknown activation");
  l.activation = static_cast<Activation>(act);
  const auto iter = get<std::uint64_t>(is);
  const auto count = get<std::uint64_t>(is);
  ScoreModel m(l);
  if (count != m.parameters().size()) throw std::runtime_error("checkpoint parameter count does not match its layout");
  for (double& p : m.parameters()) p = std::bit_cast<double>(get<std::uint64_t>(is));
  if (iteration) *iteration = iter;
  return m;
}

}  // namespace tsm::nn
