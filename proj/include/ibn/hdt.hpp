#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ibn/intent.hpp"
#include "ibn/tensor.hpp"

namespace ibn::hdt {

struct HdtConfig {
  int64_t d = 10000;        // hypervector width
  int64_t l_h = 8;          // history window, slots
  int64_t k = 2;            // actions kept per slot
  int n_layers = 2;
  int64_t n_output = 4;     // predicted slots, <= l_h
  int64_t ffn_width = 0;    // 0 -> 4*d
  uint64_t seed = 1;
  bool dot_similarity = false;  // smooth ablation of the sign kernel
  // Present each action's time as its slot fraction inside the
  // window+target span instead of the absolute normalized stamp.  Absolute
  // stamps are out-of-distribution across a chronological split and carry
  // nothing the row position does not.
  bool relative_time = true;

  int64_t ffn() const { return ffn_width > 0 ? ffn_width : 4 * d; }
  int64_t rows() const { return l_h * k; }
};

// Frozen random projection: basis (4 x D) from a unit normal, phase (D)
// uniform on [0, 2pi). Never trained.
struct EncoderBasis {
  Tensor basis;
  Tensor phase;
};

EncoderBasis make_basis(int64_t d, uint64_t seed);

// Nonlinear projection of normalized action rows into hypervectors:
// h = cos(x B + phase) * sin(x B), elementwise, bounded in [-1, 1].
// x: (rows, 4) or (batch, rows, 4); output replaces the last dim with D.
// Values only; the basis is frozen so no gradient path is recorded.
Tensor hd_encode(const Tensor& x, const EncoderBasis& basis);

// Sinusoidal slot encoding repeated across the k in-slot positions:
// row (slot * k + j) gets [sin(slot / 10000^(2i/D)), cos(...)] pairs.
Tensor positional_encoding(int64_t l_h, int64_t k, int64_t d);

// Sign-binarized agreement score in [0, 1]: 1 - (disagreeing dims)/D.
// Backward treats sign as identity so the kernel stays trainable.
// q, k: (M, D) or (batch, M, D); output (.., M, M).
Tensor hamming_similarity(const Tensor& q, const Tensor& k);

struct HdtLayer {
  Tensor w_q, w_k, w_v;
  Tensor ln1_g, ln1_b;
  Tensor w1, b1, w2, b2;
  Tensor ln2_g, ln2_b;
};

class HdtModel {
 public:
  HdtModel() = default;
  explicit HdtModel(const HdtConfig& cfg);

  // z: (batch, rows, D) -> same shape. Similarity attention, two
  // residual+norm stages with an inner feed-forward expansion.
  Tensor attention_block(const Tensor& z, int layer_idx) const;

  // x: (batch, rows, 4) normalized action windows ->
  // (batch, n_output, k*4) predictions for the slots after the window.
  Tensor forward(const Tensor& x) const;

  // Single-window convenience; input l_h*k*4, output n_output*k*4.
  std::vector<double> predict(const std::vector<double>& window_x) const;

  std::vector<Tensor> parameters();
  const HdtConfig& config() const { return cfg_; }
  const EncoderBasis& basis() const { return basis_; }
  EncoderBasis& basis_mutable() { return basis_; }
  std::vector<HdtLayer>& layers() { return layers_; }
  Tensor& w_out() { return w_out_; }
  Tensor& b_out() { return b_out_; }

 private:
  HdtConfig cfg_;
  EncoderBasis basis_;
  Tensor pos_;  // precomputed positional addend (rows, D)
  std::vector<HdtLayer> layers_;
  Tensor w_out_, b_out_;
};

// One supervised pair: x covers l_h slots ending just before t, y the
// n_output slots from t on. Arrays are normalized, masks flag real rows.
struct Sample {
  std::vector<double> x;       // l_h*k*4
  std::vector<double> y;       // n_output*k*4
  std::vector<double> y_mask;  // n_output*k
};

std::vector<Sample> make_samples(const intent::Stream& s,
                                 const intent::NormStats& stats,
                                 const HdtConfig& cfg,
                                 bool keep_empty_targets = false);

// Rounding match on the device and command fields of real rows.
// pred/truth: (rows, k, 4) flattened, mask: (rows, k). Throws when the
// mask selects nothing.
double accuracy(const std::vector<double>& pred,
                const std::vector<double>& truth,
                const std::vector<double>& mask,
                const intent::NormStats& stats, int64_t rows, int64_t k);

struct CurveRow {
  int epoch = 0;
  double train_mse = 0, val_mse = 0, val_acc = 0;
};

struct TrainOptions {
  int max_epochs = 200;
  int64_t batch = 50;
  int patience = 20;
  double lr = 1e-3;
  int warmup_epochs = 0;         // linear ramp from lr/10 to lr
  double target_val_mse = -1.0;  // stop early once both targets are met
  double target_val_acc = 2.0;
  uint64_t seed = 1;
};

struct TrainReport {
  std::vector<CurveRow> curve;
  double best_val_mse = 0;
  int best_epoch = 0;
  double final_val_acc = 0;
};

TrainReport train_model(HdtModel& m, const std::vector<Sample>& train,
                        const std::vector<Sample>& val,
                        const intent::NormStats& stats,
                        const TrainOptions& opt);

void write_curve_csv(const std::string& path,
                     const std::vector<CurveRow>& curve);

void save_hdt(const std::string& path, HdtModel& m,
              const intent::NormStats& stats);
HdtModel load_hdt(const std::string& path, intent::NormStats* stats);

}  // namespace ibn::hdt
