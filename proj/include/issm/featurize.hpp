#pragma once

// State and action features of the selection MDP, projected onto the Poincare ball.

#include <vector>

#include "issm/discrepancy.hpp"
#include "issm/hypgeo.hpp"
#include "issm/linalg.hpp"
#include "issm/recognizer.hpp"
#include "issm/types.hpp"

namespace issm {

struct AgentState {
    double mmd_hyp = 0.0;       // exp map of the labeled/unlabeled MMD
    double budget_ratio = 0.0;  // spent / budget
    double mmd_raw = 0.0;       // Euclidean MMD before projection; logged, not fed to the agent

    friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct ActionFeatures {
    double mi_hyp = 0.0;  // exp map of the marginal index
    Vector hist_hyp;      // exp map of the similarity histogram
    SampleId candidate_id = -1;

    friend bool operator==(const ActionFeatures& a, const ActionFeatures& b) {
        return a.mi_hyp == b.mi_hyp && a.candidate_id == b.candidate_id && a.hist_hyp.size() == b.hist_hyp.size() &&
               a.hist_hyp == b.hist_hyp;
    }
};

/// 1 - (top probability - runner-up probability).
double marginal_index(const Vector& probs);

/// Cosine similarities of x_emb against every unlabeled embedding, binned into
/// n_bins equal-width bins over [-1, 1] and normalized to unit mass.
Vector representativeness_histogram(const Vector& x_emb, const FeatureMatrix& unlabeled_embs, int n_bins);

/// Row i holds the histogram of candidate row i; same arithmetic as the single-row form.
Matrix representativeness_histograms(const Matrix& candidate_embs, const FeatureMatrix& unlabeled_embs, int n_bins);

AgentState build_state(const FeatureMatrix& sl_embs, const FeatureMatrix& su_embs, int spent, int budget,
                       const KernelConfig& kcfg, Curvature c);

/// State used when the unlabeled pool is exhausted: no discrepancy is measurable.
AgentState exhausted_state(int spent, int budget);

ActionFeatures build_action(const Vector& input, SampleId id, const RecognizerSnapshot& ar,
                            const FeatureMatrix& unlabeled_embs, int n_bins, Curvature c);

/// Actions for every row of candidate_inputs, in the given id order.
std::vector<ActionFeatures> build_actions(const Matrix& candidate_inputs, const IdList& ids,
                                          const RecognizerSnapshot& ar, const FeatureMatrix& unlabeled_embs,
                                          int n_bins, Curvature c);

/// Q-network input [mmd_hyp, budget_ratio, mi_hyp, hist_hyp...] of length 3 + n_bins.
Vector q_input(const AgentState& s, const ActionFeatures& a);

inline Eigen::Index q_input_dim(int n_bins) { return 3 + n_bins; }

}  // namespace issm
