#pragma once

// Bundled synthetic data for demos and tests.
//  - Sine: class 0 is sin(2 pi t / T), class 1 the same wave phase-shifted, plus noise.
//  - Threshold: the class is the sign of x[t0]; every other feature is pure noise.
// Attribution generators mimic explainer exports: a signal term per feature plus noise.

#include <numbers>
#include <random>

#include "attrib.hpp"

namespace phar {

enum class SynthKind : std::uint8_t { Sine, Threshold };

struct SynthOptions {
    SynthKind kind = SynthKind::Sine;
    std::size_t instances = 60;
    std::size_t timesteps = 24;
    std::size_t channels = 1;
    double noise = 0.3;
    double phase_shift = std::numbers::pi / 2.0;
    std::uint64_t seed = 7;
};

/// Classes alternate 0, 1, 0, ... ; instances alternate train / test within each class.
inline Dataset make_synthetic(const SynthOptions& opt) {
    if (opt.instances < 4 || opt.timesteps == 0 || opt.channels == 0)
        throw ConfigError("synthetic data needs at least 4 instances and T, C >= 1");
    Dataset data;
    data.name = opt.kind == SynthKind::Sine ? "synthetic_sine" : "synthetic_threshold";
    data.shape = {opt.timesteps, opt.channels};
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> magnitude(0.5, 1.5);
    for (std::size_t n = 0; n < opt.instances; ++n) {
        const ClassLabel cls = ClassLabel(n % 2);
        data.labels.push_back(cls);
        data.split.push_back((n / 2) % 2 == 0 ? Split::Train : Split::Test);
        for (std::size_t t = 0; t < opt.timesteps; ++t)
            for (std::size_t c = 0; c < opt.channels; ++c) {
                double v;
                if (opt.kind == SynthKind::Sine) {
                    double phase = 2.0 * std::numbers::pi * double(t) / double(opt.timesteps) + 0.7 * double(c);
                    v = std::sin(phase + (cls == 1 ? opt.phase_shift : 0.0)) + opt.noise * gauss(rng);
                } else if (t == 0 && c == 0) {
                    v = (cls == 1 ? 1.0 : -1.0) * magnitude(rng);
                } else {
                    v = gauss(rng);
                }
                data.values.push_back(v);
            }
    }
    data.validate();
    return data;
}

/// e_{n,f} = (mu1_f - mu0_f) * (x_{n,f} - (mu0_f + mu1_f) / 2) + noise, where mu are TRAIN
/// class means of the first two classes: the exact per-feature contribution of a linear
/// centroid score, blurred by Gaussian noise of sd noise_level * max|signal|.
inline AttributionTensor synthetic_attributions(const Dataset& data, std::string tag, double noise_level,
                                                std::uint64_t seed) {
    auto classes = data.classes();
    if (classes.size() < 2) throw ConfigError("synthetic attributions need two classes");
    const std::size_t d = data.shape.size();
    std::vector<double> mu0(d, 0.0), mu1(d, 0.0);
    std::size_t n0 = 0, n1 = 0;
    for (auto n : data.indices(Split::Train)) {
        auto x = data.instance(n);
        if (data.labels[n] == classes[0]) {
            for (std::size_t i = 0; i < d; ++i) mu0[i] += x[i];
            ++n0;
        } else if (data.labels[n] == classes[1]) {
            for (std::size_t i = 0; i < d; ++i) mu1[i] += x[i];
            ++n1;
        }
    }
    if (!n0 || !n1) throw ConfigError("synthetic attributions need TRAIN instances of both classes");
    for (std::size_t i = 0; i < d; ++i) {
        mu0[i] /= double(n0);
        mu1[i] /= double(n1);
    }
    AttributionTensor attr;
    attr.explainer_tag = std::move(tag);
    attr.shape = data.shape;
    std::vector<double> signal(data.size() * d);
    double peak = 0.0;
    for (std::size_t n = 0; n < data.size(); ++n) {
        auto x = data.instance(n);
        for (std::size_t i = 0; i < d; ++i) {
            signal[n * d + i] = (mu1[i] - mu0[i]) * (x[i] - 0.5 * (mu0[i] + mu1[i]));
            peak = std::max(peak, std::abs(signal[n * d + i]));
        }
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, noise_level * (peak > 0 ? peak : 1.0));
    for (std::size_t n = 0; n < data.size(); ++n) {
        attr.instances.push_back(n);
        for (std::size_t i = 0; i < d; ++i) attr.values.push_back(signal[n * d + i] + gauss(rng));
    }
    return attr;
}

} // namespace phar
