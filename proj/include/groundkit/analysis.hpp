#ifndef GROUNDKIT_ANALYSIS_HPP
#define GROUNDKIT_ANALYSIS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>
#include <json.hpp>

#include "groundkit/error.hpp"
#include "groundkit/util.hpp"

namespace groundkit {

// One segment as seen by the regression: response plus the raw features.
struct SegmentObservation {
    double segment_auc = 0.0;
    double relative_position = 0.0;
    int token_count = 0;
    std::vector<std::string> tokens;
};

inline const std::vector<std::string>& control_columns() {
    static const std::vector<std::string> names = {"intercept", "position", "position_sq", "token_count"};
    return names;
}

struct DesignMatrix {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::string> columns;
    std::vector<std::string> notices;

    Eigen::Index rows() const { return X.rows(); }
    Eigen::Index cols() const { return X.cols(); }

    // Columns [0, n) as their own design.
    DesignMatrix leading(Eigen::Index n) const {
        return {X.leftCols(n), y, std::vector<std::string>(columns.begin(), columns.begin() + n), {}};
    }
};

// Unigrams ranked by document frequency (descending, ties lexicographic), at least min_df.
inline std::vector<std::pair<std::string, int>> rank_unigrams(const std::vector<SegmentObservation>& obs, int min_df) {
    std::map<std::string, int> df;
    for (const auto& o : obs) {
        std::set<std::string> types(o.tokens.begin(), o.tokens.end());
        for (const auto& t : types) ++df[t];
    }
    std::vector<std::pair<std::string, int>> ranked;
    for (const auto& [t, n] : df)
        if (n >= min_df) ranked.emplace_back(t, n);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return ranked;
}

/*
 * Columns: intercept, position, position^2, token_count, then one 0/1
 * indicator per top-k unigram. All-zero columns are dropped with a notice.
 */
inline DesignMatrix build_design(const std::vector<SegmentObservation>& obs, int top_k, int min_df = 10) {
    if (obs.empty()) throw Error(ErrorCode::empty_input, "design needs at least one segment");
    if (top_k < 0) throw Error(ErrorCode::config, "top_k must be non-negative");
    DesignMatrix d;
    const auto n_rows = static_cast<int>(obs.size());
    const int n_controls = static_cast<int>(control_columns().size());
    auto ranked = rank_unigrams(obs, min_df);
    int k = std::min<int>(top_k, static_cast<int>(ranked.size()));
    if (n_rows <= n_controls + k) {
        int reduced = std::max(0, n_rows - n_controls - 1);
        d.notices.push_back("top_k reduced from " + std::to_string(k) + " to " + std::to_string(reduced) +
                            " so rows exceed columns");
        k = reduced;
    }
    ranked.resize(static_cast<std::size_t>(k));

    std::vector<std::string> names = control_columns();
    for (const auto& [t, _] : ranked) names.push_back(t);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n_rows, static_cast<Eigen::Index>(names.size()));
    d.y.resize(n_rows);
    std::map<std::string, Eigen::Index> col_of;
    for (int c = 0; c < k; ++c) col_of[ranked[static_cast<std::size_t>(c)].first] = n_controls + c;
    for (int r = 0; r < n_rows; ++r) {
        const auto& o = obs[static_cast<std::size_t>(r)];
        X(r, 0) = 1.0;
        X(r, 1) = o.relative_position;
        X(r, 2) = o.relative_position * o.relative_position;
        X(r, 3) = o.token_count;
        for (const auto& t : o.tokens)
            if (auto it = col_of.find(t); it != col_of.end()) X(r, it->second) = 1.0;
        d.y[r] = o.segment_auc;
    }
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        if (X.col(c).isZero(0))
            d.notices.push_back("dropped all-zero column " + names[static_cast<std::size_t>(c)]);
        else
            keep.push_back(c);
    }
    d.X.resize(n_rows, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        d.X.col(static_cast<Eigen::Index>(i)) = X.col(keep[i]);
        d.columns.push_back(names[static_cast<std::size_t>(keep[i])]);
    }
    return d;
}

struct OlsFit {
    std::vector<std::string> columns;  // retained columns, design order
    Eigen::VectorXd coefficients;
    Eigen::VectorXd std_errors;
    Eigen::VectorXd residuals;
    double rss = 0.0;
    Eigen::Index n_rows = 0;
    Eigen::Index rank = 0;
    Eigen::Index dof = 0;  // rows - rank
    std::vector<std::string> notices;
};

/*
 * Least squares through Householder QR. Columns are screened in design order
 * and one that lies in the span of the columns kept before it is dropped with
 * a notice, so controls placed first always survive and nested designs stay
 * nested after screening.
 */
inline OlsFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& columns) {
    if (X.rows() != y.size() || static_cast<std::size_t>(X.cols()) != columns.size())
        throw Error(ErrorCode::dimension, "design, response and column names disagree in size");
    if (X.rows() < X.cols()) throw Error(ErrorCode::degenerate_design, "fewer rows than columns");
    OlsFit fit;
    fit.n_rows = X.rows();

    // Incremental Gram-Schmidt with one reorthogonalization pass.
    std::vector<Eigen::Index> keep;
    Eigen::MatrixXd basis(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        const double norm = X.col(c).norm();
        Eigen::VectorXd r = X.col(c);
        const auto k = static_cast<Eigen::Index>(keep.size());
        for (int pass = 0; pass < 2 && k > 0; ++pass) r -= basis.leftCols(k) * (basis.leftCols(k).transpose() * r);
        if (norm == 0.0 || r.norm() <= 1e-9 * norm) {
            fit.notices.push_back("dropped linearly dependent column " + columns[static_cast<std::size_t>(c)]);
            continue;
        }
        basis.col(k) = r / r.norm();
        keep.push_back(c);
    }
    const auto rank = static_cast<Eigen::Index>(keep.size());
    if (rank == 0) throw Error(ErrorCode::degenerate_design, "design has rank 0");

    Eigen::MatrixXd Xk(X.rows(), rank);
    for (Eigen::Index i = 0; i < rank; ++i) {
        Xk.col(i) = X.col(keep[static_cast<std::size_t>(i)]);
        fit.columns.push_back(columns[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])]);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Xk);
    fit.coefficients = qr.solve(y);
    fit.residuals = y - Xk * fit.coefficients;
    fit.rss = fit.residuals.squaredNorm();
    fit.rank = rank;
    fit.dof = X.rows() - rank;

    Eigen::MatrixXd R = qr.matrixQR().topRows(rank).triangularView<Eigen::Upper>();
    Eigen::MatrixXd R_inv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(rank, rank));
    const double sigma2 = fit.dof > 0 ? fit.rss / static_cast<double>(fit.dof) : std::numeric_limits<double>::quiet_NaN();
    fit.std_errors = (R_inv.rowwise().squaredNorm() * sigma2).cwiseSqrt();
    return fit;
}

inline OlsFit ols_fit(const DesignMatrix& d) { return ols_fit(d.X, d.y, d.columns); }

struct FTest {
    double f = 0.0;
    double df1 = 0.0;
    double df2 = 0.0;
    double p_value = 1.0;
    bool infinite_f = false;
};

inline FTest f_test_nested(const OlsFit& restricted, const OlsFit& full) {
    if (restricted.n_rows != full.n_rows) throw Error(ErrorCode::dimension, "nested fits use different rows");
    std::set<std::string> full_cols(full.columns.begin(), full.columns.end());
    for (const auto& c : restricted.columns)
        if (!full_cols.contains(c)) throw Error(ErrorCode::dimension, "restricted column " + c + " not in full model");
    FTest t;
    t.df1 = static_cast<double>(restricted.dof - full.dof);
    t.df2 = static_cast<double>(full.dof);
    if (t.df1 <= 0) return t;
    if (full.rss <= 0.0) {
        t.f = std::numeric_limits<double>::infinity();
        t.infinite_f = true;
        t.p_value = 0.0;
        return t;
    }
    const double gain = std::max(0.0, restricted.rss - full.rss);
    t.f = (gain / t.df1) / (full.rss / t.df2);
    boost::math::fisher_f dist(t.df1, t.df2);
    t.p_value = boost::math::cdf(boost::math::complement(dist, t.f));
    return t;
}

struct CoefficientRow {
    std::string term;
    double coefficient = 0.0;
    double std_error = 0.0;
};

/*
 * Unigram coefficients sorted by signed value, largest first, ties broken
 * lexicographically. Control terms are not ranked.
 */
inline std::vector<CoefficientRow> report_coefficients(const OlsFit& fit, std::size_t top_n) {
    const auto& controls = control_columns();
    std::vector<CoefficientRow> rows;
    for (std::size_t i = 0; i < fit.columns.size(); ++i) {
        if (std::find(controls.begin(), controls.end(), fit.columns[i]) != controls.end()) continue;
        rows.push_back({fit.columns[i], fit.coefficients[static_cast<Eigen::Index>(i)],
                        fit.std_errors[static_cast<Eigen::Index>(i)]});
    }
    std::sort(rows.begin(), rows.end(), [](const CoefficientRow& a, const CoefficientRow& b) {
        return a.coefficient != b.coefficient ? a.coefficient > b.coefficient : a.term < b.term;
    });
    if (rows.size() > top_n) rows.resize(top_n);
    return rows;
}

inline std::string coefficients_csv(const OlsFit& fit, std::size_t top_n) {
    std::string out = "term,coefficient,std_error\n";
    const auto& controls = control_columns();
    for (std::size_t i = 0; i < fit.columns.size(); ++i)
        if (std::find(controls.begin(), controls.end(), fit.columns[i]) != controls.end())
            out += fit.columns[i] + ',' + format_double(fit.coefficients[static_cast<Eigen::Index>(i)]) + ',' +
                   format_double(fit.std_errors[static_cast<Eigen::Index>(i)]) + '\n';
    for (const auto& r : report_coefficients(fit, top_n))
        out += r.term + ',' + format_double(r.coefficient) + ',' + format_double(r.std_error) + '\n';
    return out;
}

inline std::string ftest_json(const FTest& t) {
    nlohmann::json j = {{"F", t.infinite_f ? nlohmann::json("inf") : nlohmann::json(t.f)},
                        {"df1", t.df1},
                        {"df2", t.df2},
                        {"p", t.p_value}};
    return j.dump(2) + "\n";
}

} // namespace groundkit

#endif
