#ifndef GROUNDKIT_LOCALIZATION_HPP
#define GROUNDKIT_LOCALIZATION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "groundkit/corpus.hpp"
#include "groundkit/error.hpp"
#include "groundkit/model.hpp"
#include "groundkit/util.hpp"

namespace groundkit {

struct TaskSteps {
    std::string task_id;
    std::vector<std::string> texts;           // ordered by step index
    std::vector<std::vector<int>> token_ids;  // filled against a vocabulary
};

struct StepAnnotation {
    std::string task_id;
    std::string video_id;
    int step = 0;
    double start_s = 0.0;
    double end_s = 0.0;
};

/*
 * Rows are steps, columns are window starts t = 0, 1, 2, ... seconds.
 */
struct ScoreGrid {
    RowMat<double> scores;
    double window_len_s = 5.0;
    int stride_s = 1;

    int steps() const { return static_cast<int>(scores.rows()); }
    int positions() const { return static_cast<int>(scores.cols()); }
};

inline int grid_columns(int duration_s, double window_len_s) {
    if (duration_s >= window_len_s) return static_cast<int>(std::floor(duration_s - window_len_s)) + 1;
    if (duration_s >= 1) return 1;
    throw Error(ErrorCode::empty_input, "video shorter than one second");
}

template <typename Scalar>
ScoreGrid score_grid(const JointEmbeddingModel<Scalar>& model, const FeatureTrack& track,
                     const std::vector<std::vector<int>>& steps, double window_len_s) {
    const int columns = grid_columns(track.duration_s(), window_len_s);
    const int rows = std::min(track.duration_s(), static_cast<int>(std::ceil(window_len_s - 1e-9)));
    std::vector<Vec<Scalar>> step_embeddings;
    for (const auto& ids : steps) step_embeddings.push_back(model.embed_text(ids));
    ScoreGrid grid{RowMat<double>(static_cast<Eigen::Index>(steps.size()), columns), window_len_s, 1};
    for (int t = 0; t < columns; ++t) {
        auto clip = model.embed_visual(track.features.middleRows(t, rows));
        for (std::size_t k = 0; k < steps.size(); ++k)
            grid.scores(static_cast<Eigen::Index>(k), t) = static_cast<double>(similarity<Scalar>(clip, step_embeddings[k]));
    }
    return grid;
}

struct StepTime {
    int step = 0;
    int time = 0;
};

/*
 * Assigns every step one column with strictly increasing columns, maximizing
 * the summed score. Among optimal assignments returns the lexicographically
 * earliest sequence of times.
 */
inline std::vector<StepTime> dp_align(const ScoreGrid& grid) {
    const int K = grid.steps();
    const int T = grid.positions();
    if (K < 1) throw Error(ErrorCode::empty_input, "alignment needs at least one step");
    if (K > T)
        throw Error(ErrorCode::infeasible_alignment,
                    std::to_string(K) + " steps cannot take distinct times among " + std::to_string(T) + " positions");
    constexpr double kNone = -std::numeric_limits<double>::infinity();
    // suffix(k, t): best score of steps k..K-1 with step k at time t.
    RowMat<double> suffix = RowMat<double>::Constant(K, T, kNone);
    // tail_best(k, t): max over t' > t of suffix(k + 1, t').
    RowMat<double> tail_best = RowMat<double>::Constant(K, T, kNone);
    for (int t = K - 1; t < T; ++t) suffix(K - 1, t) = grid.scores(K - 1, t);
    for (int k = K - 2; k >= 0; --k) {
        double running = kNone;
        for (int t = T - 1 - (K - 1 - k); t >= k; --t) {
            running = std::max(running, suffix(k + 1, t + 1));
            tail_best(k, t) = running;
            suffix(k, t) = grid.scores(k, t) + running;
        }
    }
    std::vector<StepTime> out;
    int t = 0;
    double target = kNone;
    for (int c = 0; c <= T - K; ++c) target = std::max(target, suffix(0, c));
    for (int k = 0; k < K; ++k) {
        int chosen = -1;
        for (int c = t; c <= T - K + k; ++c)
            if (suffix(k, c) == target) {
                chosen = c;
                break;
            }
        out.push_back({k, chosen});
        if (k + 1 < K) target = tail_best(k, chosen);
        t = chosen + 1;
    }
    return out;
}

// Hit iff floor(start) <= t < ceil(end).
inline bool is_hit(double predicted_time, double gt_start_s, double gt_end_s) {
    return std::floor(gt_start_s) <= predicted_time && predicted_time < std::ceil(gt_end_s);
}

struct TaskRecall {
    std::string task_id;
    int hits = 0;
    int annotated = 0;

    double recall() const { return annotated == 0 ? 0.0 : static_cast<double>(hits) / annotated; }
};

struct RecallReport {
    std::vector<TaskRecall> tasks;
    std::vector<std::string> warnings;

    double macro_average() const {
        if (tasks.empty()) throw Error(ErrorCode::undefined_metric, "no tasks scored");
        double sum = 0.0;
        for (const auto& t : tasks) sum += t.recall();
        return sum / static_cast<double>(tasks.size());
    }
};

/*
 * Scores one video's predictions against its annotations. Annotated steps
 * without a prediction count as misses and produce a warning.
 */
inline TaskRecall recall(const std::vector<StepTime>& predictions, const std::vector<StepAnnotation>& truth,
                         std::vector<std::string>* warnings = nullptr) {
    TaskRecall r;
    for (const auto& gt : truth) {
        ++r.annotated;
        auto it = std::find_if(predictions.begin(), predictions.end(),
                               [&](const StepTime& p) { return p.step == gt.step; });
        if (it == predictions.end()) {
            if (warnings)
                warnings->push_back(gt.video_id + ": step " + std::to_string(gt.step) + " has no prediction");
            continue;
        }
        if (is_hit(it->time, gt.start_s, gt.end_s)) ++r.hits;
    }
    return r;
}

// ---------------------------------------------------------------------------
// tasks.tsv: task_id<TAB>step_index<TAB>step text
// annotations.tsv: task_id<TAB>video_id<TAB>step_index<TAB>start_s<TAB>end_s

inline std::vector<TaskSteps> parse_tasks(std::string_view text) {
    std::map<std::string, std::map<int, std::string>> steps;
    std::size_t line_no = 0;
    for (auto& raw : split(text, '\n')) {
        ++line_no;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        auto f = split(line, '\t');
        if (f.size() != 3) throw Error(ErrorCode::parse, "tasks line " + std::to_string(line_no) + ": expected 3 fields");
        auto idx = static_cast<int>(parse_int(f[1], line_no, "step_index"));
        steps[std::string(trim(f[0]))][idx] = f[2];
    }
    std::vector<TaskSteps> out;
    for (auto& [task, by_index] : steps) {
        TaskSteps t{task, {}, {}};
        int expect = 0;
        for (auto& [idx, txt] : by_index) {
            if (idx != expect) throw Error(ErrorCode::parse, "task " + task + ": step indices must be 0..n-1");
            t.texts.push_back(txt);
            ++expect;
        }
        out.push_back(std::move(t));
    }
    return out;
}

inline std::vector<StepAnnotation> parse_annotations(std::string_view text) {
    std::vector<StepAnnotation> out;
    std::size_t line_no = 0;
    for (auto& raw : split(text, '\n')) {
        ++line_no;
        auto line = trim(raw);
        if (line.empty()) continue;
        auto f = split(line, '\t');
        if (f.size() != 5)
            throw Error(ErrorCode::parse, "annotations line " + std::to_string(line_no) + ": expected 5 fields");
        StepAnnotation a;
        a.task_id = std::string(trim(f[0]));
        a.video_id = std::string(trim(f[1]));
        a.step = static_cast<int>(parse_int(f[2], line_no, "step_index"));
        try {
            a.start_s = std::stod(f[3]);
            a.end_s = std::stod(f[4]);
        } catch (const std::exception&) {
            throw Error(ErrorCode::parse, "annotations line " + std::to_string(line_no) + ": bad time");
        }
        if (a.start_s > a.end_s)
            throw Error(ErrorCode::parse, "annotations line " + std::to_string(line_no) + ": start_s > end_s");
        out.push_back(std::move(a));
    }
    return out;
}

inline void assign_step_ids(std::vector<TaskSteps>& tasks, const Vocabulary& vocab) {
    for (auto& t : tasks) {
        t.token_ids.clear();
        for (const auto& text : t.texts) {
            std::vector<int> ids;
            for (const auto& w : normalize_tokens(text)) ids.push_back(vocab.id(w));
            if (ids.empty()) ids.push_back(0);
            t.token_ids.push_back(std::move(ids));
        }
    }
}

/*
 * Aligns every annotated (task, video) pair and reports per-task recall.
 * Hits and annotated steps are pooled over a task's videos.
 */
template <typename Scalar>
RecallReport evaluate_crosstask(const JointEmbeddingModel<Scalar>& model, const std::vector<TaskSteps>& tasks,
                                const std::vector<StepAnnotation>& annotations,
                                const std::map<std::string, FeatureTrack>& tracks, double window_len_s,
                                unsigned workers = 1) {
    std::map<std::pair<std::string, std::string>, std::vector<StepAnnotation>> by_video;
    for (const auto& a : annotations) by_video[{a.task_id, a.video_id}].push_back(a);
    std::map<std::string, const TaskSteps*> task_index;
    for (const auto& t : tasks) task_index[t.task_id] = &t;

    std::vector<std::pair<std::pair<std::string, std::string>, std::vector<StepAnnotation>>> jobs(by_video.begin(),
                                                                                                 by_video.end());
    std::vector<TaskRecall> per_job(jobs.size());
    std::vector<std::vector<std::string>> job_warnings(jobs.size());
    parallel_for(jobs.size(), workers, [&](std::size_t i) {
        const auto& [key, truth] = jobs[i];
        auto task = task_index.find(key.first);
        if (task == task_index.end()) throw Error(ErrorCode::data, "annotation for unknown task " + key.first);
        for (const auto& gt : truth)
            if (gt.step < 0 || gt.step >= static_cast<int>(task->second->texts.size()))
                throw Error(ErrorCode::data, "task " + key.first + ": step index " + std::to_string(gt.step) +
                                                 " out of range");
        auto track = tracks.find(key.second);
        if (track == tracks.end()) throw Error(ErrorCode::data, "no feature track for video " + key.second);
        std::vector<StepTime> predictions;
        try {
            auto grid = score_grid(model, track->second, task->second->token_ids, window_len_s);
            predictions = dp_align(grid);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::infeasible_alignment && e.code() != ErrorCode::empty_input) throw;
            job_warnings[i].push_back(key.second + ": " + e.what());
        }
        per_job[i] = recall(predictions, truth, &job_warnings[i]);
        per_job[i].task_id = key.first;
    });

    RecallReport report;
    std::map<std::string, TaskRecall> pooled;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        auto& p = pooled[per_job[i].task_id];
        p.task_id = per_job[i].task_id;
        p.hits += per_job[i].hits;
        p.annotated += per_job[i].annotated;
        for (auto& w : job_warnings[i]) report.warnings.push_back(std::move(w));
    }
    for (auto& [_, t] : pooled) report.tasks.push_back(t);
    return report;
}

inline std::string recall_csv(const RecallReport& r) {
    std::string out = "task_id,recall\n";
    for (const auto& t : r.tasks) out += t.task_id + ',' + format_double(t.recall()) + '\n';
    if (!r.tasks.empty()) out += "average," + format_double(r.macro_average()) + '\n';
    return out;
}

} // namespace groundkit

#endif
