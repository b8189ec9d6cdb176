#pragma once

// Black-box classifiers used by perturbation, occlusion and rule scoring.
// Anything satisfying the Classifier concept can be plugged into the pipeline;
// Predictor covers the built-in kinds plus an external-process bridge.

#include <cerrno>
#include <concepts>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>
#include <sys/wait.h>
#include <unistd.h>

#include "core.hpp"

namespace phar {

struct ProtocolError : Error {
    using Error::Error;
};

struct FitError : Error {
    using Error::Error;
};

template <class P>
concept Classifier = requires(const P& p, std::span<const double> batch) {
    { p.shape() } -> std::convertible_to<Shape>;
    { p.predict_batch(batch) } -> std::same_as<std::vector<ClassLabel>>;
};

namespace detail {

inline std::size_t batch_count(std::span<const double> batch, const Shape& shape) {
    if (shape.size() == 0 || batch.size() % shape.size() != 0)
        throw DimensionError("batch of " + std::to_string(batch.size()) + " values is not a multiple of T x C = " +
                             std::to_string(shape.size()));
    return batch.size() / shape.size();
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

// Runs `command` under /bin/sh, streams `input` to its stdin from a helper thread and
// collects stdout line by line. Returns the exit status through `status`.
inline std::vector<std::string> run_filter(const std::string& command, const std::string& input, int& status) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0) throw ProtocolError("pipe() failed: " + std::string(std::strerror(errno)));
    if (pipe(from_child) != 0) {
        close(to_child[0]);
        close(to_child[1]);
        throw ProtocolError("pipe() failed: " + std::string(std::strerror(errno)));
    }
    pid_t pid = fork();
    if (pid < 0) {
        for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
        throw ProtocolError("fork() failed: " + std::string(std::strerror(errno)));
    }
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);

    std::thread writer([fd = to_child[1], &input] {
        // A child that stops reading early must not kill us with SIGPIPE.
        sigset_t block;
        sigemptyset(&block);
        sigaddset(&block, SIGPIPE);
        pthread_sigmask(SIG_BLOCK, &block, nullptr);
        std::size_t off = 0;
        while (off < input.size()) {
            ssize_t n = write(fd, input.data() + off, input.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                break;
            }
            off += std::size_t(n);
        }
        close(fd);
    });

    std::vector<std::string> lines;
    std::string current;
    char buf[1 << 14];
    for (;;) {
        ssize_t n = read(from_child[0], buf, sizeof buf);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        for (ssize_t i = 0; i < n; ++i) {
            if (buf[i] == '\n') {
                lines.push_back(std::move(current));
                current.clear();
            } else {
                current.push_back(buf[i]);
            }
        }
    }
    if (!current.empty()) lines.push_back(std::move(current));
    close(from_child[0]);
    writer.join();
    int wstatus = 0;
    while (waitpid(pid, &wstatus, 0) < 0 && errno == EINTR) {
    }
    status = WIFEXITED(wstatus) ? WEXITSTATUS(wstatus) : 128 + (WIFSIGNALED(wstatus) ? WTERMSIG(wstatus) : 0);
    return lines;
}

} // namespace detail

enum class PredictorKind : std::uint8_t { NearestCentroid, OneNN, External };

/// Built-in or external classifier. Built-in kinds are read-only after fit and safe to
/// call concurrently; the external kind spawns one child process per batch.
class Predictor {
public:
    PredictorKind kind() const noexcept { return kind_; }
    Shape shape() const noexcept { return shape_; }
    const std::vector<ClassLabel>& classes() const noexcept { return classes_; }
    const std::vector<double>& centroids() const noexcept { return centroids_; }
    const std::string& command() const noexcept { return command_; }

    static Predictor fit(PredictorKind kind, const Dataset& data, std::span<const std::size_t> train,
                         std::string external_command = {}) {
        if (train.empty()) throw FitError("cannot fit a predictor on an empty train split");
        Predictor p;
        p.kind_ = kind;
        p.shape_ = data.shape;
        for (auto n : train) p.classes_.push_back(data.labels[n]);
        std::sort(p.classes_.begin(), p.classes_.end());
        p.classes_.erase(std::unique(p.classes_.begin(), p.classes_.end()), p.classes_.end());
        const std::size_t d = data.shape.size();

        switch (kind) {
        case PredictorKind::NearestCentroid: {
            p.centroids_.assign(p.classes_.size() * d, 0.0);
            std::vector<std::size_t> counts(p.classes_.size(), 0);
            for (auto n : train) {
                auto k = p.class_slot(data.labels[n]);
                auto x = data.instance(n);
                for (std::size_t i = 0; i < d; ++i) p.centroids_[k * d + i] += x[i];
                ++counts[k];
            }
            for (std::size_t k = 0; k < counts.size(); ++k) {
                if (counts[k] == 0) throw FitError("class " + std::to_string(p.classes_[k]) + " has no instances");
                for (std::size_t i = 0; i < d; ++i) p.centroids_[k * d + i] /= double(counts[k]);
            }
            break;
        }
        case PredictorKind::OneNN:
            for (auto n : train) {
                auto x = data.instance(n);
                p.references_.insert(p.references_.end(), x.begin(), x.end());
                p.reference_labels_.push_back(data.labels[n]);
            }
            break;
        case PredictorKind::External:
            if (external_command.empty()) throw FitError("external predictor needs a command");
            p.command_ = std::move(external_command);
            break;
        }
        return p;
    }

    static Predictor fit(PredictorKind kind, const Dataset& data, std::string external_command = {}) {
        auto train = data.indices(Split::Train);
        return fit(kind, data, train, std::move(external_command));
    }

    /// Parses "centroid", "1nn" or "external:<cmd>".
    static Predictor from_flag(std::string_view flag, const Dataset& data) {
        if (flag == "centroid") return fit(PredictorKind::NearestCentroid, data);
        if (flag == "1nn") return fit(PredictorKind::OneNN, data);
        if (flag.starts_with("external:")) return fit(PredictorKind::External, data, std::string(flag.substr(9)));
        throw ConfigError("unknown predictor '" + std::string(flag) + "' (expected centroid, 1nn or external:<cmd>)");
    }

    std::vector<ClassLabel> predict_batch(std::span<const double> batch) const {
        const std::size_t m = detail::batch_count(batch, shape_);
        const std::size_t d = shape_.size();
        std::vector<ClassLabel> out(m);
        switch (kind_) {
        case PredictorKind::NearestCentroid:
            for (std::size_t i = 0; i < m; ++i) {
                auto x = batch.subspan(i * d, d);
                std::size_t best = 0;
                double best_d = kInf;
                for (std::size_t k = 0; k < classes_.size(); ++k) {
                    double dist = detail::squared_distance(x, {centroids_.data() + k * d, d});
                    if (dist < best_d) {
                        best_d = dist;
                        best = k;
                    }
                }
                out[i] = classes_[best];
            }
            break;
        case PredictorKind::OneNN:
            for (std::size_t i = 0; i < m; ++i) {
                auto x = batch.subspan(i * d, d);
                double best_d = kInf;
                ClassLabel best = classes_.front();
                for (std::size_t r = 0; r < reference_labels_.size(); ++r) {
                    double dist = detail::squared_distance(x, {references_.data() + r * d, d});
                    if (dist < best_d || (dist == best_d && reference_labels_[r] < best)) {
                        best_d = dist;
                        best = reference_labels_[r];
                    }
                }
                out[i] = best;
            }
            break;
        case PredictorKind::External:
            out = predict_external(batch, m);
            break;
        }
        return out;
    }

    ClassLabel predict(std::span<const double> instance) const { return predict_batch(instance).front(); }

private:
    std::size_t class_slot(ClassLabel c) const {
        return std::size_t(std::lower_bound(classes_.begin(), classes_.end(), c) - classes_.begin());
    }

    std::vector<ClassLabel> predict_external(std::span<const double> batch, std::size_t m) const {
        std::string input;
        input.reserve(m * shape_.size() * 12);
        char num[32];
        for (std::size_t i = 0; i < m; ++i) {
            input += "{\"values\": [";
            for (std::size_t t = 0; t < shape_.timesteps; ++t) {
                input += t ? ", [" : "[";
                for (std::size_t c = 0; c < shape_.channels; ++c) {
                    std::snprintf(num, sizeof num, "%.17g", batch[(i * shape_.timesteps + t) * shape_.channels + c]);
                    if (c) input += ", ";
                    input += num;
                }
                input += "]";
            }
            input += "]}\n";
        }
        int status = 0;
        auto lines = detail::run_filter(command_, input, status);
        if (status != 0) throw ProtocolError("external predictor exited with status " + std::to_string(status));
        if (lines.size() < m)
            throw ProtocolError("external predictor: line " + std::to_string(lines.size() + 1) +
                                ": missing label (got " + std::to_string(lines.size()) + " of " + std::to_string(m) + ")");
        std::vector<ClassLabel> out(m);
        for (std::size_t i = 0; i < m; ++i) {
            const std::string& line = lines[i];
            char* end = nullptr;
            errno = 0;
            long v = std::strtol(line.c_str(), &end, 10);
            while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
            if (line.empty() || errno != 0 || !end || *end != '\0')
                throw ProtocolError("external predictor: line " + std::to_string(i + 1) + ": malformed label '" +
                                    line + "'");
            if (!classes_.empty() && !std::binary_search(classes_.begin(), classes_.end(), ClassLabel(v)))
                throw ProtocolError("external predictor: line " + std::to_string(i + 1) + ": unknown class " +
                                    std::to_string(v));
            out[i] = ClassLabel(v);
        }
        if (lines.size() > m)
            throw ProtocolError("external predictor: line " + std::to_string(m + 1) + ": unexpected extra output");
        return out;
    }

    PredictorKind kind_ = PredictorKind::NearestCentroid;
    Shape shape_;
    std::vector<ClassLabel> classes_;
    std::vector<double> centroids_;
    std::vector<double> references_;
    std::vector<ClassLabel> reference_labels_;
    std::string command_;
};

/// Wraps any callable `ClassLabel(std::span<const double>)` as a Classifier.
template <class F>
class FunctionPredictor {
public:
    FunctionPredictor(Shape shape, F fn) : shape_(shape), fn_(std::move(fn)) {}

    Shape shape() const noexcept { return shape_; }

    std::vector<ClassLabel> predict_batch(std::span<const double> batch) const {
        const std::size_t m = detail::batch_count(batch, shape_);
        std::vector<ClassLabel> out(m);
        for (std::size_t i = 0; i < m; ++i) out[i] = fn_(batch.subspan(i * shape_.size(), shape_.size()));
        return out;
    }

private:
    Shape shape_;
    F fn_;
};

template <Classifier P>
ClassLabel predict_one(const P& p, std::span<const double> instance) {
    return p.predict_batch(instance).front();
}

/// Labels for the given dataset instances, in order.
template <Classifier P>
std::vector<ClassLabel> predict_instances(const P& p, const Dataset& data, std::span<const std::size_t> which) {
    if (!(p.shape() == data.shape)) throw DimensionError("predictor shape does not match dataset shape");
    std::vector<double> batch;
    batch.reserve(which.size() * data.shape.size());
    for (auto n : which) {
        auto x = data.instance(n);
        batch.insert(batch.end(), x.begin(), x.end());
    }
    return p.predict_batch(batch);
}

} // namespace phar
