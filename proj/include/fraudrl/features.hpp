#pragma once

#include "fraudrl/types.hpp"

namespace fraudrl {

// Policy features for a call prefix at think step t:
//   phi_t = [ x ; e_{t-1} ; i_norm ; 1 ]
// x       token-count histogram of the visible turns, normalized to sum 1
//         (zero when no tokens are visible),
// e_{t-1} mean one-hot histogram of think tokens emitted so far (zero at t=1),
// i_norm  visible-turn count / 10.
inline int feature_dim(int vocab) { return 2 * vocab + 2; }

Vector base_features(const EpisodeView& episode, int vocab);

// Maintains phi across think-token emission; the x block stays fixed and the
// e block is updated as a running mean.
class FeatureState {
 public:
  FeatureState(const EpisodeView& episode, int vocab)
      : vocab_(vocab), phi_(base_features(episode, vocab)) {}

  void push_think_token(int token) {
    double t = static_cast<double>(++emitted_);
    if (emitted_ > 1) phi_.segment(vocab_, vocab_) *= (t - 1.0) / t;
    phi_[vocab_ + token] += 1.0 / t;
  }

  const Vector& phi() const { return phi_; }

 private:
  int vocab_;
  int emitted_ = 0;
  Vector phi_;
};

}  // namespace fraudrl
