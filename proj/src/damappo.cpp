#include "ibn/damappo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ibn/optim.hpp"

namespace ibn::da {

namespace {
constexpr double kLogStdLo = -5.0, kLogStdHi = 2.0;
constexpr double kLn2Pi = 1.8378770664093453;  // ln(2*pi)

double clamp_d(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}
}  // namespace

Mlp::Mlp(int64_t in, const std::vector<int64_t>& hidden, int64_t out,
         Rng& rng) {
  std::vector<int64_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    double s = 1.0 / std::sqrt(double(dims[i]));
    w.push_back(Tensor::randn({dims[i], dims[i + 1]}, rng, s, true));
    b.push_back(Tensor::zeros({dims[i + 1]}, true));
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (size_t i = 0; i < w.size(); ++i) {
    h = add_bias(matmul(h, w[i]), b[i]);
    if (i + 1 < w.size()) h = tanh_t(h);
  }
  return h;
}

void Mlp::collect(std::vector<Tensor>& out) {
  for (size_t i = 0; i < w.size(); ++i) {
    out.push_back(w[i]);
    out.push_back(b[i]);
  }
}

PolicyPair::PolicyPair(int64_t obs_dim_, int64_t bits_, bool flat_, int hidden,
                       uint64_t seed)
    : flat(flat_), obs_dim(obs_dim_), bits(bits_) {
  Rng root(seed);
  std::vector<int64_t> h{hidden, hidden};
  Rng r1 = root.substream("pi1");
  if (flat) {
    pi1 = Mlp(obs_dim, h, 2 + bits, r1);
  } else {
    pi1 = Mlp(obs_dim, h, 2, r1);
    Rng r2 = root.substream("pi2");
    pi2 = Mlp(obs_dim + 4, h, bits, r2);
  }
  logstd = Tensor::full({2}, -0.5, true);
}

std::vector<Tensor> PolicyPair::parameters() {
  std::vector<Tensor> out;
  pi1.collect(out);
  out.push_back(logstd);
  if (!flat) pi2.collect(out);
  return out;
}

std::vector<std::string> PolicyPair::parameter_names() const {
  std::vector<std::string> out;
  for (size_t i = 0; i < pi1.w.size(); ++i) {
    out.push_back("pi1.w" + std::to_string(i));
    out.push_back("pi1.b" + std::to_string(i));
  }
  out.push_back("logstd");
  if (!flat)
    for (size_t i = 0; i < pi2.w.size(); ++i) {
      out.push_back("pi2.w" + std::to_string(i));
      out.push_back("pi2.b" + std::to_string(i));
    }
  return out;
}

ValueNet::ValueNet(int64_t in_dim, int hidden, uint64_t seed) {
  Rng r(seed);
  net = Mlp(in_dim, {hidden, hidden}, 1, r);
}

double ValueNet::value(const std::vector<double>& in) const {
  NoGradGuard ng;
  Tensor x = Tensor::from({1, int64_t(in.size())}, in);
  return net.forward(x).values()[0];
}

std::vector<Tensor> ValueNet::parameters() {
  std::vector<Tensor> out;
  net.collect(out);
  return out;
}

std::vector<std::string> ValueNet::parameter_names() const {
  std::vector<std::string> out;
  for (size_t i = 0; i < net.w.size(); ++i) {
    out.push_back("v.w" + std::to_string(i));
    out.push_back("v.b" + std::to_string(i));
  }
  return out;
}

ActResult act(const PolicyPair& p, const std::vector<double>& obs, Rng& rng,
              bool deterministic) {
  if (int64_t(obs.size()) != p.obs_dim)
    throw std::invalid_argument("act: observation length mismatch");
  NoGradGuard ng;
  Tensor x = Tensor::from({1, p.obs_dim}, obs);
  ActResult out;
  out.bits.resize(size_t(p.bits));

  std::vector<double> logits(size_t(p.bits));
  const auto ls = p.logstd.values();
  for (int i = 0; i < 2; ++i)
    out.sigma[i] = std::exp(clamp_d(ls[size_t(i)], kLogStdLo, kLogStdHi));

  if (p.flat) {
    auto head = p.pi1.forward(x).values();
    out.mu[0] = head[0];
    out.mu[1] = head[1];
    for (int64_t i = 0; i < p.bits; ++i) logits[size_t(i)] = head[size_t(2 + i)];
  } else {
    auto mu = p.pi1.forward(x).values();
    out.mu[0] = mu[0];
    out.mu[1] = mu[1];
    std::vector<double> in2 = obs;
    in2.push_back(out.mu[0]);
    in2.push_back(out.mu[1]);
    in2.push_back(out.sigma[0]);
    in2.push_back(out.sigma[1]);
    Tensor x2 = Tensor::from({1, p.obs_dim + 4}, in2);
    logits = p.pi2.forward(x2).values();
  }

  out.logp = 0.0;
  for (int i = 0; i < 2; ++i) {
    double z = deterministic ? 0.0 : rng.normal();
    out.v[i] = out.mu[i] + out.sigma[i] * z;
    double d = (out.v[i] - out.mu[i]) / out.sigma[i];
    out.logp += -0.5 * d * d - std::log(out.sigma[i]) - 0.5 * kLn2Pi;
  }
  for (int64_t i = 0; i < p.bits; ++i) {
    double pr = 1.0 / (1.0 + std::exp(-logits[size_t(i)]));
    uint8_t bit = deterministic ? uint8_t(logits[size_t(i)] > 0.0)
                                : uint8_t(rng.uniform() < pr);
    out.bits[size_t(i)] = bit;
    out.logp += bit ? std::log(pr) : std::log(1.0 - pr);
  }
  return out;
}

void advantage_and_target(const RolloutBuffer& buf, const PpoHyper& h,
                          std::vector<double>* adv,
                          std::vector<double>* target, bool normalize) {
  size_t n = buf.steps.size();
  adv->assign(n, 0.0);
  target->assign(n, 0.0);
  for (size_t t = 0; t < n; ++t) {
    double g0 = 0.0, g = 1.0;
    size_t last = t;
    bool terminated = false;
    for (int l = 0; l < h.n_step && t + size_t(l) < n; ++l) {
      size_t i = t + size_t(l);
      g0 += g * buf.steps[i].reward;
      g *= h.gamma;
      last = i;
      if (buf.steps[i].done) {
        terminated = true;
        break;
      }
    }
    double boot = 0.0;
    size_t next = last + 1;
    if (!terminated && next < n) boot = buf.steps[next].value;
    (*target)[t] = g0 + g * boot;
    (*adv)[t] = (*target)[t] - buf.steps[t].value;
  }
  if (normalize && n > 0) {
    double m = 0.0;
    for (double a : *adv) m += a;
    m /= double(n);
    double s2 = 0.0;
    for (double a : *adv) s2 += (a - m) * (a - m);
    double sd = std::sqrt(s2 / double(n));
    if (sd < 1e-8) sd = 1e-8;
    for (double& a : *adv) a = (a - m) / sd;
  }
}

namespace {

// Differentiable joint log-prob, entropy, and value prediction of a
// minibatch under the current parameters.
struct GraphOut {
  Tensor logp;     // (b)
  Tensor entropy;  // (b)
  Tensor value;    // (b,1)
};

GraphOut policy_graph(PolicyPair& p, ValueNet& v, const Tensor& obs,
                      const Tensor& a1, const Tensor& bit_sign,
                      const Tensor& critic_in) {
  int64_t bsz = obs.dim(0);
  Tensor zeros2 = Tensor::zeros({bsz, 2});
  Tensor ls = clamp(p.logstd, kLogStdLo, kLogStdHi);
  Tensor ls_b = add_bias(zeros2, ls);          // (b,2) broadcast
  Tensor inv_sigma = exp_t(neg(ls_b));
  Tensor sigma_b = exp_t(ls_b);

  Tensor mu, logits;
  if (p.flat) {
    Tensor head = reshape(p.pi1.forward(obs), {bsz, 2 + p.bits, 1});
    mu = reshape(narrow1(head, 0, 2), {bsz, 2});
    logits = reshape(narrow1(head, 2, 2 + p.bits), {bsz, p.bits});
  } else {
    mu = p.pi1.forward(obs);
    Tensor in2 = concat_last({obs, mu, sigma_b});
    logits = p.pi2.forward(in2);
  }

  Tensor z = mul(sub(a1, mu), inv_sigma);
  Tensor logp1 = sub(scale(sum_last(square(z)), -0.5),
                     add_const(sum_last(ls_b), kLn2Pi));
  // bit_sign holds 1-2b; logp per bit = -softplus((1-2b) * logit)
  Tensor logp2 = neg(sum_last(softplus(mul(bit_sign, logits))));
  GraphOut out;
  out.logp = add(logp1, logp2);

  // Gaussian entropy 0.5*ln(2*pi*e) + logstd per dim; Bernoulli entropy
  // p*softplus(-l) + (1-p)*softplus(l)
  // Gaussian entropy sums 0.5*ln(2*pi*e) + logstd over both dims.
  Tensor h_g = add_const(sum_last(ls_b), kLn2Pi + 1.0);
  Tensor pr = sigmoid(logits);
  Tensor h_b =
      add(mul(pr, softplus(neg(logits))),
          mul(add_const(neg(pr), 1.0), softplus(logits)));
  out.entropy = add(h_g, sum_last(h_b));
  out.value = v.net.forward(critic_in);
  return out;
}

}  // namespace

UpdateStats ppo_update(const RolloutBuffer& buf, PolicyPair& p, ValueNet& v,
                       const PpoHyper& h, uint64_t seed) {
  if (buf.steps.empty()) throw std::invalid_argument("ppo_update: empty buffer");
  std::vector<double> adv, target;
  advantage_and_target(buf, h, &adv, &target);

  auto pol_params = p.parameters();
  auto val_params = v.parameters();
  Adam opt_p(pol_params, h.lr);
  Adam opt_v(val_params, h.lr);
  Rng rng = Rng(seed).substream("ppo.update");

  size_t n = buf.steps.size();
  int64_t obs_dim = p.obs_dim;
  int64_t cdim = int64_t(buf.steps[0].critic_in.size());
  std::vector<int> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = int(i);

  UpdateStats st;
  int64_t batches = 0;
  for (int ep = 0; ep < h.epochs; ++ep) {
    for (size_t i = n; i > 1; --i)
      std::swap(idx[i - 1], idx[size_t(rng.uniform_int(0, int(i) - 1))]);
    for (size_t lo = 0; lo < n; lo += size_t(h.minibatch)) {
      size_t hi = std::min(n, lo + size_t(h.minibatch));
      int64_t b = int64_t(hi - lo);
      std::vector<double> ov(size_t(b * obs_dim)), av(size_t(b * 2));
      std::vector<double> sv(size_t(b * p.bits)), cv(size_t(b * cdim));
      std::vector<double> lpv(size_t(b), 0.0), adv_v(size_t(b), 0.0);
      std::vector<double> tv(size_t(b), 0.0);
      for (int64_t r = 0; r < b; ++r) {
        const StepSample& s = buf.steps[size_t(idx[lo + size_t(r)])];
        std::copy(s.obs.begin(), s.obs.end(), ov.begin() + r * obs_dim);
        av[size_t(r * 2)] = s.a1[0];
        av[size_t(r * 2 + 1)] = s.a1[1];
        for (int64_t j = 0; j < p.bits; ++j)
          sv[size_t(r * p.bits + j)] = s.bits[size_t(j)] ? -1.0 : 1.0;
        std::copy(s.critic_in.begin(), s.critic_in.end(),
                  cv.begin() + r * cdim);
        lpv[size_t(r)] = s.logp_old;
        adv_v[size_t(r)] = adv[size_t(idx[lo + size_t(r)])];
        tv[size_t(r)] = target[size_t(idx[lo + size_t(r)])];
      }
      Tensor obs = Tensor::from({b, obs_dim}, ov);
      Tensor a1 = Tensor::from({b, 2}, av);
      Tensor bit_sign = Tensor::from({b, p.bits}, sv);
      Tensor critic_in = Tensor::from({b, cdim}, cv);
      Tensor logp_old = Tensor::from({b}, lpv);
      Tensor adv_t = Tensor::from({b}, adv_v);
      Tensor target_t = Tensor::from({b, 1}, tv);

      GraphOut g = policy_graph(p, v, obs, a1, bit_sign, critic_in);
      Tensor ratio = exp_t(sub(g.logp, logp_old));
      Tensor surr = minimum(mul(ratio, adv_t),
                            mul(clamp(ratio, 1.0 - h.clip_eps, 1.0 + h.clip_eps),
                                adv_t));
      Tensor mean_surr = mean(surr);
      Tensor mean_ent = mean(g.entropy);
      Tensor vloss = mse(g.value, target_t);
      Tensor total = add(add(neg(mean_surr), scale(mean_ent, -h.c1_entropy)),
                         scale(vloss, h.c2_value));
      if (!std::isfinite(total.item()))
        throw std::runtime_error("ppo_update: non-finite loss");

      opt_p.zero_grad();
      opt_v.zero_grad();
      total.backward();
      std::vector<Tensor> all = pol_params;
      all.insert(all.end(), val_params.begin(), val_params.end());
      clip_grad_norm(all, h.grad_clip);
      opt_p.step();
      opt_v.step();

      double kl = 0.0, mr = 0.0;
      const auto lp_new = g.logp.values();
      const auto rat = ratio.values();
      for (int64_t r = 0; r < b; ++r) {
        kl += lpv[size_t(r)] - lp_new[size_t(r)];
        mr += rat[size_t(r)];
      }
      st.approx_kl += kl / double(b);
      st.mean_ratio += mr / double(b);
      st.surrogate += mean_surr.item();
      st.value_loss += vloss.item();
      st.entropy += mean_ent.item();
      ++batches;
    }
  }
  st.approx_kl /= double(batches);
  st.mean_ratio /= double(batches);
  st.surrogate /= double(batches);
  st.value_loss /= double(batches);
  st.entropy /= double(batches);
  return st;
}

Predictor zero_predictor(int64_t pred_len) {
  return [pred_len](const std::vector<double>&) {
    return std::vector<double>(size_t(pred_len), 0.0);
  };
}

std::vector<AgentNets> make_agents(const env::Env& e, const TrainConfig& tc,
                                   uint64_t seed) {
  const auto& cfg = e.config();
  int64_t obs_dim = e.obs_len();
  int64_t bits = cfg.n_output + cfg.n_l;
  int64_t critic_dim = tc.centralized_critic ? obs_dim * cfg.n_aav : obs_dim;
  std::vector<AgentNets> agents;
  for (int a = 0; a < cfg.n_aav; ++a) {
    AgentNets an;
    an.policy = PolicyPair(obs_dim, bits, tc.flat_policy, tc.hidden,
                           mix_seed(seed, "policy." + std::to_string(a)));
    an.critic = ValueNet(critic_dim, tc.hidden,
                         mix_seed(seed, "critic." + std::to_string(a)));
    agents.push_back(std::move(an));
  }
  return agents;
}

EpisodeStats run_episode(env::Env& e, std::vector<AgentNets>& agents,
                         const Predictor& pred, const TrainConfig& tc,
                         uint64_t seed, bool deterministic,
                         std::vector<RolloutBuffer>* bufs) {
  const auto& cfg = e.config();
  e.reset(seed);
  Rng arng = Rng(seed).substream("episode.act");
  EpisodeStats stats;
  std::vector<double> agent_sum(size_t(cfg.n_aav), 0.0);
  int64_t steps = 0;

  while (true) {
    std::vector<std::vector<double>> preds(size_t(cfg.n_aav));
    std::vector<std::vector<double>> obs(size_t(cfg.n_aav));
    for (int a = 0; a < cfg.n_aav; ++a) {
      preds[size_t(a)] = pred(e.pooled_window(a));
      obs[size_t(a)] = e.observe(a, preds[size_t(a)]);
    }
    std::vector<double> critic_in;
    if (tc.centralized_critic) {
      for (int a = 0; a < cfg.n_aav; ++a)
        critic_in.insert(critic_in.end(), obs[size_t(a)].begin(),
                         obs[size_t(a)].end());
    }

    std::vector<env::AavAction> acts(size_t(cfg.n_aav));
    std::vector<ActResult> results(size_t(cfg.n_aav));
    for (int a = 0; a < cfg.n_aav; ++a) {
      results[size_t(a)] =
          act(agents[size_t(a)].policy, obs[size_t(a)], arng, deterministic);
      env::AavAction& aa = acts[size_t(a)];
      aa.vx = results[size_t(a)].v[0];
      aa.vy = results[size_t(a)].v[1];
      aa.m.assign(results[size_t(a)].bits.begin(),
                  results[size_t(a)].bits.begin() + cfg.n_output);
      aa.m_bs.assign(results[size_t(a)].bits.begin() + cfg.n_output,
                     results[size_t(a)].bits.end());
    }
    auto out = e.step(acts, preds);
    for (int a = 0; a < cfg.n_aav; ++a)
      agent_sum[size_t(a)] += out.rewards[size_t(a)];
    ++steps;

    if (bufs) {
      for (int a = 0; a < cfg.n_aav; ++a) {
        StepSample s;
        s.obs = std::move(obs[size_t(a)]);
        s.critic_in = tc.centralized_critic ? critic_in : s.obs;
        s.a1[0] = results[size_t(a)].v[0];
        s.a1[1] = results[size_t(a)].v[1];
        s.bits = results[size_t(a)].bits;
        s.logp_old = results[size_t(a)].logp;
        s.reward = out.rewards[size_t(a)];
        s.value = agents[size_t(a)].critic.value(s.critic_in);
        s.done = out.done;
        (*bufs)[size_t(a)].steps.push_back(std::move(s));
      }
    }
    if (out.done) break;
  }
  double total = 0.0;
  for (int a = 0; a < cfg.n_aav; ++a) total += agent_sum[size_t(a)];
  stats.mean_reward = total / double(cfg.n_aav) / double(steps);
  stats.objective = e.episode_objective();
  return stats;
}

EpisodeStats random_episode(env::Env& e, const Predictor& pred,
                            uint64_t seed) {
  const auto& cfg = e.config();
  e.reset(seed);
  Rng rng = Rng(seed).substream("episode.random");
  EpisodeStats stats;
  double total = 0.0;
  int64_t steps = 0;
  while (true) {
    std::vector<std::vector<double>> preds(size_t(cfg.n_aav));
    std::vector<env::AavAction> acts(size_t(cfg.n_aav));
    for (int a = 0; a < cfg.n_aav; ++a) {
      preds[size_t(a)] = pred(e.pooled_window(a));
      acts[size_t(a)].vx = rng.uniform(-cfg.v_max, cfg.v_max);
      acts[size_t(a)].vy = rng.uniform(-cfg.v_max, cfg.v_max);
      acts[size_t(a)].m.resize(size_t(cfg.n_output));
      acts[size_t(a)].m_bs.resize(size_t(cfg.n_l));
      for (auto& bb : acts[size_t(a)].m) bb = uint8_t(rng.uniform_int(0, 1));
      for (auto& bb : acts[size_t(a)].m_bs) bb = uint8_t(rng.uniform_int(0, 1));
    }
    auto out = e.step(acts, preds);
    for (double r : out.rewards) total += r;
    ++steps;
    if (out.done) break;
  }
  stats.mean_reward = total / double(cfg.n_aav) / double(steps);
  stats.objective = e.episode_objective();
  return stats;
}

TrainOutput train_loop(env::Env& e, const Predictor& pred,
                       const TrainConfig& tc, int episodes, uint64_t seed) {
  const auto& cfg = e.config();
  TrainOutput out;
  out.agents = make_agents(e, tc, mix_seed(seed, "agents"));
  std::vector<RolloutBuffer> bufs(size_t(cfg.n_aav));

  for (int ep = 1; ep <= episodes; ++ep) {
    uint64_t ep_seed = mix_seed(seed, "episode." + std::to_string(ep));
    run_episode(e, out.agents, pred, tc, ep_seed, false, &bufs);

    CurvePoint c;
    c.episode = ep;
    int64_t steps = int64_t(bufs[0].steps.size());
    // mean reward over the most recent episode only
    int64_t ep_steps = int64_t(cfg.slots);
    for (int a = 0; a < cfg.n_aav; ++a) {
      double s = 0.0;
      for (int64_t i = steps - ep_steps; i < steps; ++i)
        s += bufs[size_t(a)].steps[size_t(i)].reward;
      c.agent_mean.push_back(s / double(ep_steps));
    }
    c.objective = e.episode_objective();
    out.curve.push_back(c);

    if (ep % tc.update_every == 0) {
      for (int a = 0; a < cfg.n_aav; ++a) {
        ppo_update(bufs[size_t(a)], out.agents[size_t(a)].policy,
                   out.agents[size_t(a)].critic, tc.hyper,
                   mix_seed(seed, "update." + std::to_string(ep) + "." +
                                      std::to_string(a)));
        bufs[size_t(a)].steps.clear();
      }
    }
  }
  return out;
}

void write_reward_curve_csv(const std::string& path,
                            const std::vector<CurvePoint>& curve) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "episode";
  if (!curve.empty())
    for (size_t a = 0; a < curve[0].agent_mean.size(); ++a)
      f << ",agent" << a << "_mean_reward";
  f << ",objective\n";
  char buf[64];
  for (const auto& c : curve) {
    f << c.episode;
    for (double v : c.agent_mean) {
      std::snprintf(buf, sizeof buf, ",%.10g", v);
      f << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.10g\n", c.objective);
    f << buf;
  }
}

}  // namespace ibn::da
