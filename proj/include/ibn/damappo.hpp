#pragma once
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ibn/env.hpp"
#include "ibn/rng.hpp"
#include "ibn/tensor.hpp"

// Multi-agent PPO with a cascaded two-part action: a Gaussian flight-velocity
// head feeding a conditional Bernoulli head over the intent-service bits.

namespace ibn::da {

struct Mlp {
  std::vector<Tensor> w, b;
  Mlp() = default;
  // tanh hidden layers, linear output, 1/sqrt(fan_in) init
  Mlp(int64_t in, const std::vector<int64_t>& hidden, int64_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(std::vector<Tensor>& out);
};

struct PpoHyper {
  double gamma = 0.99;
  int n_step = 5;
  double clip_eps = 0.2;
  double c1_entropy = 0.01;
  double c2_value = 0.5;
  int epochs = 4;
  int64_t minibatch = 64;
  double lr = 3e-4;
  double grad_clip = 0.5;
};

// Cascade: pi1 maps obs -> mu(2) with a learned state-independent log-std;
// pi2 maps [obs | mu | sigma] -> bit logits.  Flat: one trunk maps obs ->
// [mu(2) | bit logits] with the same log-std parameter.
struct PolicyPair {
  bool flat = false;
  int64_t obs_dim = 0, bits = 0;
  Mlp pi1;
  Tensor logstd;  // (2); exp(clamp(logstd, -5, 2)) is the std dev
  Mlp pi2;

  PolicyPair() = default;
  PolicyPair(int64_t obs_dim, int64_t bits, bool flat, int hidden,
             uint64_t seed);
  std::vector<Tensor> parameters();
  std::vector<std::string> parameter_names() const;
};

struct ValueNet {
  Mlp net;
  ValueNet() = default;
  ValueNet(int64_t in_dim, int hidden, uint64_t seed);
  double value(const std::vector<double>& in) const;
  std::vector<Tensor> parameters();
  std::vector<std::string> parameter_names() const;
};

struct ActResult {
  double v[2] = {0, 0};  // raw velocity sample, before any env clipping
  std::vector<uint8_t> bits;
  double logp = 0;  // joint: Gaussian head + Bernoulli head
  double mu[2] = {0, 0}, sigma[2] = {0, 0};
};
// deterministic: take mu and logit > 0.
ActResult act(const PolicyPair& p, const std::vector<double>& obs, Rng& rng,
              bool deterministic);

struct StepSample {
  std::vector<double> obs;
  std::vector<double> critic_in;  // centralized critic input
  double a1[2] = {0, 0};
  std::vector<uint8_t> bits;
  double logp_old = 0;
  double reward = 0;
  double value = 0;
  bool done = false;  // terminal after this step
};

struct RolloutBuffer {
  std::vector<StepSample> steps;
};

// n-step return: G0_t = sum_{l<n} gamma^l r_{t+l} truncated at the episode
// boundary; advantage = G0 - V(s_t); target = G0 + gamma^n V(s_{t+n}) with
// V = 0 past the terminal step.  Advantages come back normalized unless
// normalize = false.
void advantage_and_target(const RolloutBuffer& buf, const PpoHyper& h,
                          std::vector<double>* adv,
                          std::vector<double>* target, bool normalize = true);

struct UpdateStats {
  double surrogate = 0;
  double value_loss = 0;
  double entropy = 0;
  double approx_kl = 0;
  double mean_ratio = 0;
};
// Clipped-surrogate update: minimize -surrogate - c1*entropy + c2*value_mse,
// minibatched over epochs, gradient norm clipped.
UpdateStats ppo_update(const RolloutBuffer& buf, PolicyPair& p, ValueNet& v,
                       const PpoHyper& h, uint64_t seed);

// Maps an AAV's pooled intent window to a flattened prediction.
using Predictor = std::function<std::vector<double>(const std::vector<double>&)>;
Predictor zero_predictor(int64_t pred_len);

struct AgentNets {
  PolicyPair policy;
  ValueNet critic;
};

struct TrainConfig {
  PpoHyper hyper;
  bool centralized_critic = true;
  bool flat_policy = false;
  int hidden = 64;
  int update_every = 1;  // episodes per PPO update
};

struct EpisodeStats {
  double mean_reward = 0;  // over agents and slots
  double objective = 0;    // episode-level mean q1
};

std::vector<AgentNets> make_agents(const env::Env& e, const TrainConfig& tc,
                                   uint64_t seed);

// One episode; fills per-agent buffers when given.
EpisodeStats run_episode(env::Env& e, std::vector<AgentNets>& agents,
                         const Predictor& pred, const TrainConfig& tc,
                         uint64_t seed, bool deterministic,
                         std::vector<RolloutBuffer>* bufs);

// Uniform velocities in [-v_max, v_max]^2 and fair-coin bits.
EpisodeStats random_episode(env::Env& e, const Predictor& pred, uint64_t seed);

struct CurvePoint {
  int episode = 0;
  std::vector<double> agent_mean;  // per-agent mean reward over the episode
  double objective = 0;
};

struct TrainOutput {
  std::vector<AgentNets> agents;
  std::vector<CurvePoint> curve;
};
TrainOutput train_loop(env::Env& e, const Predictor& pred,
                       const TrainConfig& tc, int episodes, uint64_t seed);

void write_reward_curve_csv(const std::string& path,
                            const std::vector<CurvePoint>& curve);

}  // namespace ibn::da
