#include "fraudrl/policy.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "fraudrl/encode.hpp"
#include "fraudrl/errors.hpp"
#include "fraudrl/grammar.hpp"

namespace fraudrl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blocks are serialized little-endian");

Vector base_features(const EpisodeView& episode, int vocab) {
  Vector phi = Vector::Zero(feature_dim(vocab));
  double total = 0.0;
  for (int i = 0; i < episode.visible_turns; ++i)
    for (int tok : episode.call->turns[static_cast<std::size_t>(i)].tokens) {
      phi[tok] += 1.0;
      total += 1.0;
    }
  if (total > 0.0) phi.head(vocab) /= total;
  phi[2 * vocab] = episode.visible_turns / 10.0;
  phi[2 * vocab + 1] = 1.0;
  return phi;
}

const char* block_name(int id) {
  switch (id) {
    case kBlockThink: return "think";
    case kBlockAnswerScenario: return "answer_scenario";
    case kBlockAnswerFraud: return "answer_fraud";
    case kBlockAnswerFraudType: return "answer_fraud_type";
    case kBlockPhase: return "phase";
    case kBlockFormat: return "format";
  }
  return "?";
}

namespace {

std::array<int, kBlockCount> block_rows(Mode mode, int vocab) {
  int extra = mode == Mode::real_time ? 1 : 0;
  return {vocab + 1, kScenarioClasses + extra, kFraudClasses + extra,
          kFraudTypeClasses + extra, mode == Mode::real_time ? 3 : 0, 1};
}

}  // namespace

PolicyParameters PolicyParameters::zeros(Mode mode, int vocab) {
  PolicyParameters p;
  p.mode = mode;
  p.vocab = vocab;
  auto rows = block_rows(mode, vocab);
  for (int b = 0; b < kBlockCount; ++b)
    p.block[b] = Matrix::Zero(rows[b], fraudrl::feature_dim(vocab));
  return p;
}

PolicyParameters PolicyParameters::random_init(Mode mode, int vocab, double stddev,
                                               CounterRng rng) {
  PolicyParameters p = zeros(mode, vocab);
  for (int b = 0; b < kBlockCount; ++b) {
    CounterRng stream = rng.derive(block_name(b));
    Matrix& m = p.block[b];
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        m(r, c) = stddev * stream.next_gaussian();
  }
  return p;
}

PolicyParameters PolicyParameters::to_real_time() const {
  if (mode == Mode::real_time) return *this;
  PolicyParameters p = zeros(Mode::real_time, vocab);
  p.block[kBlockThink] = block[kBlockThink];
  p.block[kBlockFormat] = block[kBlockFormat];
  for (Task t : {Task::scenario, Task::fraud, Task::fraud_type}) {
    const Matrix& src = answer_block(t);
    p.answer_block(t).topRows(src.rows()) = src;  // abstain row stays zero
  }
  return p;
}

bool PolicyParameters::all_finite() const {
  for (const auto& m : block)
    if (!m.allFinite()) return false;
  return true;
}

ParameterBlocks ParameterBlocks::zeros_like(const PolicyParameters& p) {
  ParameterBlocks g;
  for (int b = 0; b < kBlockCount; ++b)
    g.block[b] = Matrix::Zero(p.block[b].rows(), p.block[b].cols());
  return g;
}

void ParameterBlocks::set_zero() {
  for (auto& m : block) m.setZero();
}

double ParameterBlocks::squared_norm() const {
  double s = 0.0;
  for (const auto& m : block) s += m.squaredNorm();
  return s;
}

bool ParameterBlocks::all_finite() const {
  for (const auto& m : block)
    if (!m.allFinite()) return false;
  return true;
}

ParameterBlocks& ParameterBlocks::add_scaled(const ParameterBlocks& other, double scale) {
  for (int b = 0; b < kBlockCount; ++b) block[b].noalias() += scale * other.block[b];
  return *this;
}

namespace {

Vector head_logits(const PolicyParameters& params, Task task, Head head,
                   const Vector& phi) {
  switch (head) {
    case Head::think:
      return params.block[kBlockThink] * phi;
    case Head::answer:
      return params.answer_block(task) * phi;
    case Head::phase:
      return params.block[kBlockPhase] * phi;
    case Head::format: {
      Vector z(2);
      z[0] = 0.0;
      z[1] = (params.block[kBlockFormat] * phi)(0);
      return z;
    }
  }
  return Vector();
}

Vector softmax(const Vector& z) {
  Vector p = (z.array() - z.maxCoeff()).exp();
  return p / p.sum();
}

Vector log_softmax(const Vector& z) {
  double m = z.maxCoeff();
  double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

int argmax_lowest(const Vector& z) {
  int best = 0;
  for (int i = 1; i < z.size(); ++i)
    if (z[i] > z[best]) best = i;
  return best;
}

}  // namespace

Vector step_distribution(const PolicyParameters& params, Task task, Head head,
                         const Vector& phi) {
  return softmax(head_logits(params, task, head, phi));
}

Vector filter_distribution(const Vector& logits, const GenerationParams& gen) {
  const int n = static_cast<int>(logits.size());
  Vector probs = softmax(logits / gen.temperature);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  });

  int keep = std::min(gen.top_k, n);
  double kept_mass = 0.0;
  for (int i = 0; i < keep; ++i) kept_mass += probs[order[static_cast<std::size_t>(i)]];

  // Smallest prefix of the top-k (renormalized) with mass >= top_p.
  int nucleus = keep;
  double cum = 0.0;
  for (int i = 0; i < keep; ++i) {
    cum += probs[order[static_cast<std::size_t>(i)]] / kept_mass;
    if (cum >= gen.top_p) {
      nucleus = i + 1;
      break;
    }
  }

  double nucleus_mass = 0.0;
  for (int i = 0; i < nucleus; ++i) nucleus_mass += probs[order[static_cast<std::size_t>(i)]];
  Vector out = Vector::Zero(n);
  for (int i = 0; i < nucleus; ++i) {
    int idx = order[static_cast<std::size_t>(i)];
    out[idx] = probs[idx] / nucleus_mass;
  }
  return out;
}

namespace {

int sample_categorical(const Vector& probs, double u) {
  double cum = 0.0;
  int last = 0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last = i;
    cum += probs[i];
    if (u < cum) return i;
  }
  return last;
}

// Draws one action; returns {action, logprob under the recorded distribution}.
std::pair<int, double> draw_step(const PolicyParameters& params, Task task, Head head,
                                 const Vector& phi, const GenerationParams& gen,
                                 CounterRng stream) {
  Vector z = head_logits(params, task, head, phi);
  if (gen.greedy) {
    int a = argmax_lowest(z);
    return {a, log_softmax(z)[a]};
  }
  Vector p = filter_distribution(z, gen);
  int a = sample_categorical(p, stream.next_double());
  return {a, std::log(p[a])};
}

}  // namespace

Rollout sample_rollout(const PolicyParameters& params, const EpisodeView& episode,
                       Task task, const GenerationParams& gen, CounterRng rng) {
  if (!gen.greedy && !(gen.temperature > 0.0))
    throw DataError("sample_rollout: temperature 0 requires greedy mode");

  Rollout out;
  FeatureState state(episode, params.vocab);

  auto [fmt, fmt_lp] = draw_step(params, task, Head::format, state.phi(), gen,
                                 rng.derive("format"));
  out.well_formed = fmt == 1;
  out.step_logprobs.push_back(fmt_lp);

  CounterRng think_stream = rng.derive("think");
  out.forced_stop = true;
  for (int t = 0; t < gen.max_think_tokens; ++t) {
    auto [a, lp] = draw_step(params, task, Head::think, state.phi(), gen,
                             think_stream.derive(static_cast<std::uint64_t>(t)));
    out.step_logprobs.push_back(lp);
    if (a == params.stop_row()) {
      out.forced_stop = false;
      break;
    }
    out.think_tokens.push_back(a);
    state.push_think_token(a);
  }
  out.think_len = static_cast<int>(out.think_tokens.size());

  if (params.mode == Mode::real_time) {
    auto [ph, ph_lp] = draw_step(params, task, Head::phase, state.phi(), gen,
                                 rng.derive("phase"));
    out.phase_claim = static_cast<Phase>(ph);
    out.step_logprobs.push_back(ph_lp);
  }

  auto [ans, ans_lp] = draw_step(params, task, Head::answer, state.phi(), gen,
                                 rng.derive("answer"));
  out.answer = ans;
  out.step_logprobs.push_back(ans_lp);

  RenderInput rin{&out.think_tokens, out.answer, out.phase_claim, out.well_formed};
  out.rendered = render(rin, task);
  return out;
}

int rollout_step_count(const PolicyParameters& params, const Rollout& rollout) {
  return 1 + rollout.think_len + (rollout.forced_stop ? 0 : 1) +
         (params.mode == Mode::real_time ? 1 : 0) + 1;
}

namespace {

// Walks the rollout's step factors in generation order and calls
// visit(head, phi, chosen_action, step_index) for each of them.
template <class Visitor>
void walk_rollout(const PolicyParameters& params, const EpisodeView& episode,
                  Task task, const Rollout& rollout, Visitor&& visit) {
  FeatureState state(episode, params.vocab);
  int step = 0;
  visit(Head::format, state.phi(), rollout.well_formed ? 1 : 0, step++);
  for (int tok : rollout.think_tokens) {
    visit(Head::think, state.phi(), tok, step++);
    state.push_think_token(tok);
  }
  if (!rollout.forced_stop) visit(Head::think, state.phi(), params.stop_row(), step++);
  if (params.mode == Mode::real_time) {
    assert(rollout.phase_claim.has_value());
    visit(Head::phase, state.phi(), static_cast<int>(*rollout.phase_claim), step++);
  }
  visit(Head::answer, state.phi(), rollout.answer, step++);
}

}  // namespace

double sequence_logprob(const PolicyParameters& params, const EpisodeView& episode,
                        Task task, const Rollout& rollout) {
  double total = 0.0;
  walk_rollout(params, episode, task, rollout,
               [&](Head head, const Vector& phi, int chosen, int) {
                 total += log_softmax(head_logits(params, task, head, phi))[chosen];
               });
  return total;
}

std::vector<double> per_step_logprobs(const PolicyParameters& params,
                                      const EpisodeView& episode, Task task,
                                      const Rollout& rollout) {
  std::vector<double> out(static_cast<std::size_t>(rollout_step_count(params, rollout)));
  walk_rollout(params, episode, task, rollout,
               [&](Head head, const Vector& phi, int chosen, int step) {
                 out[static_cast<std::size_t>(step)] =
                     log_softmax(head_logits(params, task, head, phi))[chosen];
               });
  return out;
}

void accumulate_logprob_gradient(const PolicyParameters& params,
                                 const EpisodeView& episode, Task task,
                                 const Rollout& rollout,
                                 const std::vector<double>& step_weights,
                                 PolicyGradient& out) {
  assert(static_cast<int>(step_weights.size()) == rollout_step_count(params, rollout));
  const int f = params.feature_dim();
  const int think_steps = rollout.think_len + (rollout.forced_stop ? 0 : 1);

  // Think steps are batched into one GEMM: rows of `delta` hold
  // w_t * (onehot(a_t) - p_t), rows of `phis` hold phi_t.
  Matrix delta(think_steps, params.vocab + 1);
  Matrix phis(think_steps, f);
  int think_row = 0;

  walk_rollout(params, episode, task, rollout,
               [&](Head head, const Vector& phi, int chosen, int step) {
                 double w = step_weights[static_cast<std::size_t>(step)];
                 switch (head) {
                   case Head::think: {
                     Vector p = step_distribution(params, task, head, phi);
                     phis.row(think_row) = phi.transpose();
                     delta.row(think_row) = (-w) * p.transpose();
                     delta(think_row, chosen) += w;
                     ++think_row;
                     break;
                   }
                   case Head::format: {
                     double sig = step_distribution(params, task, head, phi)[1];
                     double coeff = w * ((chosen == 1 ? 1.0 : 0.0) - sig);
                     out.block[kBlockFormat].row(0).noalias() += coeff * phi.transpose();
                     break;
                   }
                   case Head::answer:
                   case Head::phase: {
                     int b = head == Head::answer
                                 ? kBlockAnswerScenario + static_cast<int>(task)
                                 : kBlockPhase;
                     Vector p = step_distribution(params, task, head, phi);
                     p[chosen] -= 1.0;
                     out.block[b].noalias() += (-w) * p * phi.transpose();
                     break;
                   }
                 }
               });
  if (think_steps > 0)
    out.block[kBlockThink].noalias() += delta.transpose() * phis;
}

PolicyGradient logprob_gradient(const PolicyParameters& params,
                                const EpisodeView& episode, Task task,
                                const Rollout& rollout) {
  PolicyGradient g = PolicyGradient::zeros_like(params);
  std::vector<double> ones(static_cast<std::size_t>(rollout_step_count(params, rollout)),
                           1.0);
  accumulate_logprob_gradient(params, episode, task, rollout, ones, g);
  return g;
}

namespace {

std::string encode_block(const Matrix& m) {
  std::vector<double> row_major;
  row_major.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) row_major.push_back(m(r, c));
  return base64_encode(reinterpret_cast<const unsigned char*>(row_major.data()),
                       row_major.size() * sizeof(double));
}

Matrix decode_block(const std::string& data, Eigen::Index rows, Eigen::Index cols) {
  std::vector<unsigned char> bytes = base64_decode(data);
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double))
    throw DataError("checkpoint: block byte count does not match its shape");
  Matrix m(rows, cols);
  const double* p = reinterpret_cast<const double*>(bytes.data());
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = *p++;
  return m;
}

constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const PolicyParameters& p = ckpt.params;
  nlohmann::ordered_json blocks;
  for (int b = 0; b < kBlockCount; ++b) {
    if (p.block[b].rows() == 0) continue;  // phase head absent in full-call mode
    blocks[block_name(b)] = {{"rows", p.block[b].rows()},
                             {"cols", p.block[b].cols()},
                             {"data", encode_block(p.block[b])}};
  }
  nlohmann::ordered_json j{
      {"format", "fraudrl-checkpoint"},
      {"version", kCheckpointVersion},
      {"rng", kRngVersion},
      {"mode", p.mode == Mode::real_time ? "real_time" : "full_call"},
      {"vocab_size", p.vocab},
      {"feature_dim", p.feature_dim()},
      {"sft_warmstarted", ckpt.sft_warmstarted},
      {"blocks", std::move(blocks)},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != "fraudrl-checkpoint")
    throw DataError("checkpoint " + path + ": unrecognized format");
  if (j.value("version", -1) != kCheckpointVersion)
    throw DataError("checkpoint " + path + ": unsupported version");

  Checkpoint ckpt;
  std::string mode = j.at("mode").get<std::string>();
  ckpt.params = PolicyParameters::zeros(
      mode == "real_time" ? Mode::real_time : Mode::full_call,
      j.at("vocab_size").get<int>());
  ckpt.sft_warmstarted = j.at("sft_warmstarted").get<bool>();
  const auto& blocks = j.at("blocks");
  for (int b = 0; b < kBlockCount; ++b) {
    Matrix& m = ckpt.params.block[b];
    if (m.rows() == 0) continue;
    const auto& bj = blocks.at(block_name(b));
    if (bj.at("rows").get<Eigen::Index>() != m.rows() ||
        bj.at("cols").get<Eigen::Index>() != m.cols())
      throw DataError(std::string("checkpoint: unexpected shape for block ") + block_name(b));
    m = decode_block(bj.at("data").get<std::string>(), m.rows(), m.cols());
  }
  return ckpt;
}

}  // namespace fraudrl
