#include "ibn/hdt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "ibn/checkpoint.hpp"
#include "ibn/optim.hpp"

namespace ibn::hdt {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

EncoderBasis make_basis(int64_t d, uint64_t seed) {
  Rng root(seed);
  Rng r = root.substream("hdt.basis");
  EncoderBasis b;
  b.basis = Tensor::randn({4, d}, r);
  b.phase = Tensor::rand_uniform({d}, r, 0.0, kTwoPi);
  return b;
}

Tensor hd_encode(const Tensor& x, const EncoderBasis& basis) {
  for (double v : x.values())
    if (!std::isfinite(v)) throw std::invalid_argument("hd_encode: non-finite input");
  if (x.dim(x.ndim() - 1) != 4)
    throw std::invalid_argument("hd_encode: last dim must be 4");
  int64_t d = basis.basis.dim(1);
  int64_t n = x.size() / 4;
  NoGradGuard ng;
  Tensor xf = reshape(x, {n, 4});
  Tensor u = matmul(xf, basis.basis);  // (n, d)
  Shape out_shape = x.shape();
  out_shape.back() = d;
  Tensor out = Tensor::zeros(out_shape);
  const double* uv = u.data();
  const double* ph = basis.phase.data();
  double* ov = out.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double a = uv[i * d + j];
      ov[i * d + j] = std::cos(a + ph[j]) * std::sin(a);
    }
  return out;
}

Tensor positional_encoding(int64_t l_h, int64_t k, int64_t d) {
  Tensor pe = Tensor::zeros({l_h * k, d});
  double* p = pe.data();
  for (int64_t t = 0; t < l_h; ++t) {
    for (int64_t j = 0; j < d; ++j) {
      int64_t pair = j / 2;
      double rate = std::pow(10000.0, double(2 * pair) / double(d));
      double angle = double(t) / rate;
      double v = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
      for (int64_t q = 0; q < k; ++q) p[(t * k + q) * d + j] = v;
    }
  }
  return pe;
}

Tensor hamming_similarity(const Tensor& q, const Tensor& k) {
  bool flat = q.ndim() == 2;
  Tensor q3 = flat ? reshape(q, {1, q.dim(0), q.dim(1)}) : q;
  Tensor k3 = flat ? reshape(k, {1, k.dim(0), k.dim(1)}) : k;
  int64_t d = q3.dim(2);
  Tensor s = add_const(
      scale(bmm_nt(sign_st(q3), sign_st(k3)), 1.0 / (2.0 * double(d))), 0.5);
  if (flat) return reshape(s, {s.dim(1), s.dim(2)});
  return s;
}

HdtModel::HdtModel(const HdtConfig& cfg) : cfg_(cfg) {
  if (cfg.n_output > cfg.l_h)
    throw std::invalid_argument("n_output must be <= l_h");
  basis_ = make_basis(cfg.d, cfg.seed);
  pos_ = positional_encoding(cfg.l_h, cfg.k, cfg.d);
  Rng root(cfg.seed);
  double wscale = 1.0 / std::sqrt(double(cfg.d));
  for (int i = 0; i < cfg.n_layers; ++i) {
    Rng r = root.substream("hdt.layer" + std::to_string(i));
    HdtLayer l;
    l.w_q = Tensor::randn({cfg.d, cfg.d}, r, wscale, true);
    l.w_k = Tensor::randn({cfg.d, cfg.d}, r, wscale, true);
    l.w_v = Tensor::randn({cfg.d, cfg.d}, r, wscale, true);
    l.ln1_g = Tensor::full({cfg.d}, 1.0, true);
    l.ln1_b = Tensor::zeros({cfg.d}, true);
    l.w1 = Tensor::randn({cfg.d, cfg.ffn()}, r, wscale, true);
    l.b1 = Tensor::zeros({cfg.ffn()}, true);
    l.w2 = Tensor::randn({cfg.ffn(), cfg.d}, r,
                         1.0 / std::sqrt(double(cfg.ffn())), true);
    l.b2 = Tensor::zeros({cfg.d}, true);
    l.ln2_g = Tensor::full({cfg.d}, 1.0, true);
    l.ln2_b = Tensor::zeros({cfg.d}, true);
    layers_.push_back(std::move(l));
  }
  Rng rh = root.substream("hdt.head");
  w_out_ = Tensor::randn({cfg.d, 4}, rh, wscale, true);
  b_out_ = Tensor::zeros({4}, true);
}

Tensor HdtModel::attention_block(const Tensor& z, int layer_idx) const {
  const HdtLayer& l = layers_[size_t(layer_idx)];
  int64_t b = z.dim(0), m = z.dim(1), d = z.dim(2);
  Tensor zf = reshape(z, {b * m, d});
  Tensor q = reshape(matmul(zf, l.w_q), {b, m, d});
  Tensor k = reshape(matmul(zf, l.w_k), {b, m, d});
  Tensor v = reshape(matmul(zf, l.w_v), {b, m, d});
  Tensor logits;
  if (cfg_.dot_similarity) {
    logits = scale(bmm_nt(q, k), 1.0 / std::sqrt(double(d)));
  } else {
    logits = scale(hamming_similarity(q, k), std::sqrt(double(d)));
  }
  Tensor att = softmax_last(logits);
  Tensor mixed = bmm(att, v);
  Tensor z1 = layernorm_last(add(z, mixed), l.ln1_g, l.ln1_b);
  Tensor z1f = reshape(z1, {b * m, d});
  Tensor h = add_bias(matmul(gelu(add_bias(matmul(z1f, l.w1), l.b1)), l.w2),
                      l.b2);
  return layernorm_last(add(z1, reshape(h, {b, m, d})), l.ln2_g, l.ln2_b);
}

Tensor HdtModel::forward(const Tensor& x) const {
  if (x.ndim() != 3 || x.dim(1) != cfg_.rows() || x.dim(2) != 4)
    throw std::invalid_argument("forward: window shape mismatch");
  int64_t b = x.dim(0);
  Tensor z;
  {
    NoGradGuard ng;
    z = hd_encode(x, basis_);
    double* zv = z.data();
    const double* pv = pos_.data();
    int64_t block = cfg_.rows() * cfg_.d;
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < block; ++j) zv[i * block + j] += pv[j];
  }
  for (int i = 0; i < cfg_.n_layers; ++i) z = attention_block(z, i);
  Tensor zf = reshape(z, {b * cfg_.rows(), cfg_.d});
  Tensor y = add_bias(matmul(zf, w_out_), b_out_);
  Tensor y3 = reshape(y, {b, cfg_.l_h, cfg_.k * 4});
  return narrow1(y3, cfg_.l_h - cfg_.n_output, cfg_.l_h);
}

std::vector<double> HdtModel::predict(const std::vector<double>& wx) const {
  if (int64_t(wx.size()) != cfg_.rows() * 4)
    throw std::invalid_argument("predict: window size mismatch");
  NoGradGuard ng;
  Tensor x = Tensor::from({1, cfg_.rows(), 4}, wx);
  return forward(x).values();
}

std::vector<Tensor> HdtModel::parameters() {
  std::vector<Tensor> out;
  for (auto& l : layers_)
    for (Tensor* t : {&l.w_q, &l.w_k, &l.w_v, &l.ln1_g, &l.ln1_b, &l.w1, &l.b1,
                      &l.w2, &l.b2, &l.ln2_g, &l.ln2_b})
      out.push_back(*t);
  out.push_back(w_out_);
  out.push_back(b_out_);
  return out;
}

std::vector<Sample> make_samples(const intent::Stream& s,
                                 const intent::NormStats& stats,
                                 const HdtConfig& cfg,
                                 bool keep_empty_targets) {
  std::vector<Sample> out;
  if (s.actions.empty()) return out;
  int64_t last_t = s.actions.back().t;
  for (int64_t t = cfg.l_h; t + cfg.n_output - 1 <= last_t; ++t) {
    auto wy = intent::make_window(s, stats, t + cfg.n_output,
                                  int(cfg.n_output), int(cfg.k));
    bool any = false;
    for (double m : wy.mask) any = any || m > 0.5;
    if (!any && !keep_empty_targets) continue;
    auto wx = intent::make_window(s, stats, t, int(cfg.l_h), int(cfg.k));
    std::vector<double> ymask(wy.mask.begin(), wy.mask.end());
    if (cfg.relative_time) {
      double span = double(cfg.l_h + cfg.n_output);
      for (int64_t r = 0; r < cfg.l_h; ++r)
        for (int64_t j = 0; j < cfg.k; ++j)
          if (wx.mask[size_t(r * cfg.k + j)])
            wx.x[size_t((r * cfg.k + j) * 4)] = double(r) / span;
      for (int64_t r = 0; r < cfg.n_output; ++r)
        for (int64_t j = 0; j < cfg.k; ++j)
          if (wy.mask[size_t(r * cfg.k + j)])
            wy.x[size_t((r * cfg.k + j) * 4)] = double(cfg.l_h + r) / span;
    }
    out.push_back({std::move(wx.x), std::move(wy.x), std::move(ymask)});
  }
  return out;
}

double accuracy(const std::vector<double>& pred,
                const std::vector<double>& truth,
                const std::vector<double>& mask,
                const intent::NormStats& stats, int64_t rows, int64_t k) {
  if (pred.size() != truth.size() || pred.size() != size_t(rows * k * 4) ||
      mask.size() != size_t(rows * k))
    throw std::invalid_argument("accuracy: shape mismatch");
  int64_t total = 0, correct = 0;
  for (int64_t i = 0; i < rows * k; ++i) {
    if (mask[size_t(i)] < 0.5) continue;
    ++total;
    bool dev_ok =
        std::llround(stats.denormalize(1, pred[size_t(i * 4 + 1)])) ==
        std::llround(stats.denormalize(1, truth[size_t(i * 4 + 1)]));
    bool cmd_ok =
        std::llround(stats.denormalize(3, pred[size_t(i * 4 + 3)])) ==
        std::llround(stats.denormalize(3, truth[size_t(i * 4 + 3)]));
    if (dev_ok && cmd_ok) ++correct;
  }
  if (total == 0) throw std::invalid_argument("accuracy: no real rows");
  return double(correct) / double(total);
}

namespace {

struct Batch {
  Tensor x, y;
};

Batch gather(const std::vector<Sample>& samples, const std::vector<int>& idx,
             size_t lo, size_t hi, const HdtConfig& cfg) {
  int64_t bs = int64_t(hi - lo);
  Tensor x = Tensor::zeros({bs, cfg.rows(), 4});
  Tensor y = Tensor::zeros({bs, cfg.n_output, cfg.k * 4});
  for (size_t b = lo; b < hi; ++b) {
    const Sample& s = samples[size_t(idx[b])];
    std::copy(s.x.begin(), s.x.end(), x.data() + int64_t(b - lo) * cfg.rows() * 4);
    std::copy(s.y.begin(), s.y.end(),
              y.data() + int64_t(b - lo) * cfg.n_output * cfg.k * 4);
  }
  return {x, y};
}

// Pooled rounding accuracy plus MSE over a sample set, inference mode.
void evaluate(const HdtModel& m, const std::vector<Sample>& set,
              const intent::NormStats& stats, double* out_mse,
              double* out_acc) {
  NoGradGuard ng;
  const HdtConfig& cfg = m.config();
  double se = 0.0;
  int64_t n = 0;
  std::vector<double> pool_pred, pool_truth, pool_mask;
  for (const Sample& s : set) {
    auto pred = m.predict(s.x);
    for (size_t i = 0; i < pred.size(); ++i) {
      double d = pred[i] - s.y[i];
      se += d * d;
      ++n;
    }
    pool_pred.insert(pool_pred.end(), pred.begin(), pred.end());
    pool_truth.insert(pool_truth.end(), s.y.begin(), s.y.end());
    pool_mask.insert(pool_mask.end(), s.y_mask.begin(), s.y_mask.end());
  }
  *out_mse = n ? se / double(n) : 0.0;
  bool any = false;
  for (double v : pool_mask) any = any || v > 0.5;
  *out_acc = any ? accuracy(pool_pred, pool_truth, pool_mask, stats,
                            int64_t(set.size()) * cfg.n_output, cfg.k)
                 : 0.0;
}

}  // namespace

TrainReport train_model(HdtModel& m, const std::vector<Sample>& train,
                        const std::vector<Sample>& val,
                        const intent::NormStats& stats,
                        const TrainOptions& opt) {
  if (train.empty()) throw std::invalid_argument("train_model: empty dataset");
  auto params = m.parameters();
  Adam adam(params, opt.lr);
  Rng rng = Rng(opt.seed).substream("hdt.train");
  const HdtConfig& cfg = m.config();

  TrainReport rep;
  rep.best_val_mse = 1e300;
  std::vector<std::vector<double>> snapshot;
  int since_best = 0;

  std::vector<int> idx(train.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);

  for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    if (opt.warmup_epochs > 0)
      adam.set_lr(epoch >= opt.warmup_epochs
                      ? opt.lr
                      : opt.lr * (0.1 + 0.9 * double(epoch - 1) /
                                            double(opt.warmup_epochs)));
    for (size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[size_t(rng.uniform_int(0, int(i) - 1))]);
    double train_se = 0.0;
    int64_t train_n = 0;
    for (size_t lo = 0; lo < idx.size(); lo += size_t(opt.batch)) {
      size_t hi = std::min(idx.size(), lo + size_t(opt.batch));
      Batch b = gather(train, idx, lo, hi, cfg);
      Tensor pred = m.forward(b.x);
      Tensor loss = mse(pred, b.y);
      adam.zero_grad();
      loss.backward();
      adam.step();
      train_se += loss.item() * double(pred.size());
      train_n += pred.size();
    }
    CurveRow row;
    row.epoch = epoch;
    row.train_mse = train_se / double(train_n);
    evaluate(m, val.empty() ? train : val, stats, &row.val_mse, &row.val_acc);
    rep.curve.push_back(row);

    if (row.val_mse < rep.best_val_mse) {
      rep.best_val_mse = row.val_mse;
      rep.best_epoch = epoch;
      rep.final_val_acc = row.val_acc;
      snapshot.clear();
      for (auto& p : params) snapshot.push_back(p.values());
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      break;
    }
    if (opt.target_val_mse >= 0 && row.val_mse <= opt.target_val_mse &&
        row.val_acc >= opt.target_val_acc)
      break;
  }
  if (!snapshot.empty())
    for (size_t i = 0; i < params.size(); ++i) params[i].values() = snapshot[i];
  return rep;
}

void write_curve_csv(const std::string& path,
                     const std::vector<CurveRow>& curve) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "epoch,train_mse,val_mse,val_accuracy\n";
  char buf[160];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.epoch,
                  r.train_mse, r.val_mse, r.val_acc);
    f << buf;
  }
}

void save_hdt(const std::string& path, HdtModel& m,
              const intent::NormStats& stats) {
  Checkpoint ck;
  const HdtConfig& c = m.config();
  ck.meta["kind"] = "hdt";
  ck.meta["d"] = c.d;
  ck.meta["l_h"] = c.l_h;
  ck.meta["k"] = c.k;
  ck.meta["n_layers"] = c.n_layers;
  ck.meta["n_output"] = c.n_output;
  ck.meta["ffn_width"] = c.ffn();
  ck.meta["seed"] = c.seed;
  ck.meta["dot_similarity"] = c.dot_similarity;
  ck.meta["stats_lo"] = std::vector<double>(stats.lo, stats.lo + 4);
  ck.meta["stats_hi"] = std::vector<double>(stats.hi, stats.hi + 4);
  ck.add("encoder.basis", m.basis().basis);
  ck.add("encoder.phase", m.basis().phase);
  for (size_t i = 0; i < m.layers().size(); ++i) {
    auto& l = m.layers()[i];
    std::string p = "layer" + std::to_string(i) + ".";
    ck.add(p + "w_q", l.w_q);
    ck.add(p + "w_k", l.w_k);
    ck.add(p + "w_v", l.w_v);
    ck.add(p + "ln1_g", l.ln1_g);
    ck.add(p + "ln1_b", l.ln1_b);
    ck.add(p + "w1", l.w1);
    ck.add(p + "b1", l.b1);
    ck.add(p + "w2", l.w2);
    ck.add(p + "b2", l.b2);
    ck.add(p + "ln2_g", l.ln2_g);
    ck.add(p + "ln2_b", l.ln2_b);
  }
  ck.add("head.w_out", m.w_out());
  ck.add("head.b_out", m.b_out());
  save_checkpoint(path, ck);
}

HdtModel load_hdt(const std::string& path, intent::NormStats* stats) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("kind", "") != "hdt")
    throw std::runtime_error("checkpoint is not a predictor");
  HdtConfig c;
  c.d = ck.meta.at("d").get<int64_t>();
  c.l_h = ck.meta.at("l_h").get<int64_t>();
  c.k = ck.meta.at("k").get<int64_t>();
  c.n_layers = ck.meta.at("n_layers").get<int>();
  c.n_output = ck.meta.at("n_output").get<int64_t>();
  c.ffn_width = ck.meta.at("ffn_width").get<int64_t>();
  c.seed = ck.meta.at("seed").get<uint64_t>();
  c.dot_similarity = ck.meta.at("dot_similarity").get<bool>();
  if (stats) {
    auto lo = ck.meta.at("stats_lo").get<std::vector<double>>();
    auto hi = ck.meta.at("stats_hi").get<std::vector<double>>();
    std::copy(lo.begin(), lo.end(), stats->lo);
    std::copy(hi.begin(), hi.end(), stats->hi);
  }
  HdtModel m(c);
  auto restore = [&](const std::string& name, Tensor& t) {
    Tensor src = ck.get(name);
    if (src.shape() != t.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    t.values() = src.values();
  };
  restore("encoder.basis", m.basis_mutable().basis);
  restore("encoder.phase", m.basis_mutable().phase);
  for (size_t i = 0; i < m.layers().size(); ++i) {
    auto& l = m.layers()[i];
    std::string p = "layer" + std::to_string(i) + ".";
    restore(p + "w_q", l.w_q);
    restore(p + "w_k", l.w_k);
    restore(p + "w_v", l.w_v);
    restore(p + "ln1_g", l.ln1_g);
    restore(p + "ln1_b", l.ln1_b);
    restore(p + "w1", l.w1);
    restore(p + "b1", l.b1);
    restore(p + "w2", l.w2);
    restore(p + "b2", l.b2);
    restore(p + "ln2_g", l.ln2_g);
    restore(p + "ln2_b", l.ln2_b);
  }
  restore("head.w_out", m.w_out());
  restore("head.b_out", m.b_out());
  return m;
}

}  // namespace ibn::hdt
