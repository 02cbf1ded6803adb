#ifndef NSGP_VALIDATION_HPP
#define NSGP_VALIDATION_HPP

// Scoring rules (interval score, RMSE) and the leave-one-Latin-hypercube-out harness.

#include "nsgp/core.hpp"
#include "nsgp/distributions.hpp"
#include "nsgp/emulator.hpp"

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

namespace nsgp {

/// S = (u - l) + (2/alpha)(l - y) 1{y < l} + (2/alpha)(y - u) 1{y > u}.
inline double interval_score(double l, double u, double y, double alpha = 0.05) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("interval_score: alpha must lie in (0, 1)");
    if (!(l <= u)) throw ArgumentError("interval_score: lower endpoint exceeds upper endpoint");
    double s = u - l;
    if (y < l) s += 2.0 / alpha * (l - y);
    if (y > u) s += 2.0 / alpha * (y - u);
    return s;
}

inline double rmse(const Vector& predictions, const Vector& truths) {
    if (predictions.size() != truths.size()) throw ArgumentError("rmse: length mismatch");
    if (predictions.size() == 0) throw ArgumentError("rmse: empty input");
    return std::sqrt((predictions - truths).squaredNorm() / static_cast<double>(predictions.size()));
}

struct ScoredPrediction {
    double truth = 0.0;
    double mean = 0.0;
    double sd = 0.0;
    /// mean -/+ z_{1 - alpha/2} sd
    double lower = 0.0;
    double upper = 0.0;
    /// mean -/+ 2 sd, for plots
    double plot_lower = 0.0;
    double plot_upper = 0.0;
    double standardized_error = 0.0;
    double score = 0.0;
    bool inside = true;
};

struct ScoreSummary {
    std::vector<ScoredPrediction> points;
    double alpha = 0.05;
    double mean_interval_score = 0.0;
    double rmse = 0.0;
    int covered = 0;

    Eigen::Index size() const { return static_cast<Eigen::Index>(points.size()); }
    int failures() const { return static_cast<int>(points.size()) - covered; }
    double coverage() const { return points.empty() ? 0.0 : static_cast<double>(covered) / static_cast<double>(points.size()); }
    double mean_width() const {
        double w = 0.0;
        for (const auto& p : points) w += p.upper - p.lower;
        return points.empty() ? 0.0 : w / static_cast<double>(points.size());
    }
};

inline ScoreSummary score_predictions(const Vector& mean, const Vector& sd, const Vector& truth, double alpha = 0.05) {
    if (mean.size() != truth.size() || sd.size() != truth.size())
        throw ArgumentError("score_predictions: length mismatch");
    if (truth.size() == 0) throw ArgumentError("score_predictions: nothing to score");
    const double z = normal_quantile(1.0 - alpha / 2.0);
    ScoreSummary s;
    s.alpha = alpha;
    for (Eigen::Index i = 0; i < truth.size(); ++i) {
        if (!(sd(i) >= 0.0)) throw DomainError("score_predictions: negative predictive sd");
        ScoredPrediction p;
        p.truth = truth(i);
        p.mean = mean(i);
        p.sd = sd(i);
        p.lower = mean(i) - z * sd(i);
        p.upper = mean(i) + z * sd(i);
        p.plot_lower = mean(i) - 2.0 * sd(i);
        p.plot_upper = mean(i) + 2.0 * sd(i);
        p.standardized_error = sd(i) > 0.0 ? (truth(i) - mean(i)) / sd(i) : 0.0;
        p.score = interval_score(p.lower, p.upper, p.truth, alpha);
        p.inside = p.truth >= p.lower && p.truth <= p.upper;
        s.mean_interval_score += p.score;
        if (p.inside) ++s.covered;
        s.points.push_back(p);
    }
    s.mean_interval_score /= static_cast<double>(truth.size());
    s.rmse = rmse(mean, truth);
    return s;
}

inline ScoreSummary score_predictions(const PredictiveSummary& pred, const Vector& truth, double alpha = 0.05) {
    return score_predictions(pred.mean, pred.sd, truth, alpha);
}

/// Maps a training set to a predictor; both work in the caller's units.
using Predictor = std::function<PredictiveSummary(const Matrix&)>;
using EmulatorFactory = std::function<Predictor(const Matrix& X_train, const Vector& F_train)>;

struct FoldReport {
    int fold = 0;
    Eigen::Index size = 0;
    bool failed = false;
    std::string error;
    ScoreSummary scores;
    std::vector<Eigen::Index> rows;

    int covered() const { return scores.covered; }
    std::vector<Eigen::Index> failure_points() const {
        std::vector<Eigen::Index> out;
        for (std::size_t k = 0; k < scores.points.size(); ++k)
            if (!scores.points[k].inside) out.push_back(rows[k]);
        return out;
    }
};

/// For each label: refit through the factory on the other labels' rows, predict the held-out
/// rows and score them. A fold whose refit or prediction throws is marked failed.
inline std::vector<FoldReport> lolho_report(const std::vector<int>& labels, const Matrix& X, const Vector& F,
                                            const EmulatorFactory& factory, double alpha = 0.05) {
    if (static_cast<Eigen::Index>(labels.size()) != X.rows() || X.rows() != F.size())
        throw ArgumentError("lolho: labels, design and responses differ in length");
    std::vector<int> folds(labels);
    std::sort(folds.begin(), folds.end());
    folds.erase(std::unique(folds.begin(), folds.end()), folds.end());
    if (folds.size() < 2) throw ArgumentError("lolho: need at least two folds");

    std::vector<FoldReport> out;
    for (int f : folds) {
        FoldReport rep;
        rep.fold = f;
        std::vector<Eigen::Index> train;
        for (Eigen::Index i = 0; i < X.rows(); ++i) (labels[static_cast<std::size_t>(i)] == f ? rep.rows : train).push_back(i);
        rep.size = static_cast<Eigen::Index>(rep.rows.size());
        try {
            Matrix Xtr(static_cast<Eigen::Index>(train.size()), X.cols());
            Vector Ftr(Xtr.rows());
            for (std::size_t k = 0; k < train.size(); ++k) {
                Xtr.row(static_cast<Eigen::Index>(k)) = X.row(train[k]);
                Ftr(static_cast<Eigen::Index>(k)) = F(train[k]);
            }
            Matrix Xte(rep.size, X.cols());
            Vector Fte(rep.size);
            for (std::size_t k = 0; k < rep.rows.size(); ++k) {
                Xte.row(static_cast<Eigen::Index>(k)) = X.row(rep.rows[k]);
                Fte(static_cast<Eigen::Index>(k)) = F(rep.rows[k]);
            }
            Predictor predict = factory(Xtr, Ftr);
            rep.scores = score_predictions(predict(Xte), Fte, alpha);
        } catch (const std::exception& e) {
            rep.failed = true;
            rep.error = e.what();
        }
        out.push_back(std::move(rep));
    }
    return out;
}

}  // namespace nsgp

#endif  // NSGP_VALIDATION_HPP
