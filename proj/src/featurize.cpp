#include "issm/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "issm/errors.hpp"

namespace issm {

namespace {

constexpr double kDistributionTolerance = 1e-9;

Matrix normalized_rows(const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double n = m.row(i).norm();
        if (n > 0.0) {
            out.row(i) /= n;
        } else {
            out.row(i).setZero();  // zero-norm embeddings score similarity 0
        }
    }
    return out;
}

Vector histogram_of(const Vector& sims, int n_bins) {
    Vector h = Vector::Zero(n_bins);
    for (Eigen::Index i = 0; i < sims.size(); ++i) {
        const double s = std::clamp(sims[i], -1.0, 1.0);
        auto bin = static_cast<int>(std::floor((s + 1.0) * n_bins / 2.0));
        bin = std::clamp(bin, 0, n_bins - 1);
        h[bin] += 1.0;
    }
    return h / static_cast<double>(sims.size());
}

void check_bins(int n_bins) {
    if (n_bins < 2) throw ConfigError("histogram needs at least two bins, got " + std::to_string(n_bins));
}

}  // namespace

double marginal_index(const Vector& probs) {
    if (probs.size() < 2) throw ConfigError("marginal index needs at least two classes");
    if (!probs.allFinite() || probs.minCoeff() < 0.0 || probs.maxCoeff() > 1.0 ||
        std::abs(probs.sum() - 1.0) > kDistributionTolerance) {
        throw InvalidInputError("marginal index: input is not a probability distribution");
    }
    double top = -1.0;
    double second = -1.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (p > top) {
            second = top;
            top = p;
        } else if (p > second) {
            second = p;
        }
    }
    return 1.0 - (top - second);
}

Matrix representativeness_histograms(const Matrix& candidate_embs, const FeatureMatrix& unlabeled_embs, int n_bins) {
    check_bins(n_bins);
    if (candidate_embs.cols() != unlabeled_embs.dim()) {
        throw ShapeError("histogram: candidate embedding dimension " + std::to_string(candidate_embs.cols()) +
                         " vs unlabeled " + std::to_string(unlabeled_embs.dim()));
    }
    const Matrix un = normalized_rows(unlabeled_embs.rows());
    const Matrix cn = normalized_rows(candidate_embs);
    Matrix out(candidate_embs.rows(), n_bins);
    for (Eigen::Index i = 0; i < cn.rows(); ++i) {
        const Vector sims = un * cn.row(i).transpose();
        out.row(i) = histogram_of(sims, n_bins).transpose();
    }
    return out;
}

Vector representativeness_histogram(const Vector& x_emb, const FeatureMatrix& unlabeled_embs, int n_bins) {
    return representativeness_histograms(x_emb.transpose(), unlabeled_embs, n_bins).row(0).transpose();
}

AgentState build_state(const FeatureMatrix& sl_embs, const FeatureMatrix& su_embs, int spent, int budget,
                       const KernelConfig& kcfg, Curvature c) {
    if (budget < 1) throw InvalidInputError("budget must be at least 1");
    if (spent < 0 || spent > budget) throw InvalidInputError("spent must lie in [0, budget]");
    AgentState s;
    s.mmd_raw = mmd(sl_embs, su_embs, kcfg);
    s.mmd_hyp = exp_map_origin(s.mmd_raw, c);
    s.budget_ratio = static_cast<double>(spent) / static_cast<double>(budget);
    return s;
}

AgentState exhausted_state(int spent, int budget) {
    if (budget < 1) throw InvalidInputError("budget must be at least 1");
    AgentState s;
    s.budget_ratio = static_cast<double>(spent) / static_cast<double>(budget);
    return s;
}

std::vector<ActionFeatures> build_actions(const Matrix& candidate_inputs, const IdList& ids,
                                          const RecognizerSnapshot& ar, const FeatureMatrix& unlabeled_embs,
                                          int n_bins, Curvature c) {
    if (static_cast<Eigen::Index>(ids.size()) != candidate_inputs.rows()) {
        throw ShapeError("one candidate id per input row required");
    }
    std::vector<ActionFeatures> out;
    if (ids.empty()) return out;
    const Matrix probs = ar.predict_proba_rows(candidate_inputs);
    const Matrix embs = ar.embed_rows(candidate_inputs);
    const Matrix hists = representativeness_histograms(embs, unlabeled_embs, n_bins);
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        ActionFeatures a;
        a.candidate_id = ids[i];
        a.mi_hyp = exp_map_origin(marginal_index(probs.row(row).transpose()), c);
        a.hist_hyp = exp_map_origin(Vector(hists.row(row).transpose()), c).coords();
        out.push_back(std::move(a));
    }
    return out;
}

ActionFeatures build_action(const Vector& input, SampleId id, const RecognizerSnapshot& ar,
                            const FeatureMatrix& unlabeled_embs, int n_bins, Curvature c) {
    return build_actions(input.transpose(), IdList{id}, ar, unlabeled_embs, n_bins, c).front();
}

Vector q_input(const AgentState& s, const ActionFeatures& a) {
    Vector v(3 + a.hist_hyp.size());
    v[0] = s.mmd_hyp;
    v[1] = s.budget_ratio;
    v[2] = a.mi_hyp;
    v.tail(a.hist_hyp.size()) = a.hist_hyp;
    return v;
}

}  // namespace issm
