#include "fmsr/residual.hpp"

#include <cmath>

#include "fmsr/errors.hpp"
#include "fmsr/hash.hpp"

namespace fmsr {

Decomposition decompose(const Field& hr, const Field& lr, const RegridPlan& plan_up) {
    if (!(hr.grid() == plan_up.dst())) {
        throw ValidationError("decompose: high-resolution field is not on the plan's fine grid");
    }
    if (!(hr.catalog() == lr.catalog())) throw ValidationError("decompose: channel catalog mismatch");
    Field up = interpolate_up(lr, plan_up);
    up.set_timestamp(hr.timestamp());
    std::vector<double> r(hr.values().size());
    const auto a = hr.values();
    const auto b = up.values();
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = a[i] - b[i];
    Field residual = hr.with_values(std::move(r));
    return {std::move(up), std::move(residual)};
}

void NormAccumulator::Moments::add(std::span<const double> values) {
    // Chan et al. merge of a batch with its own mean and M2.
    double bn = static_cast<double>(values.size());
    if (bn == 0.0) return;
    double bmean = 0.0;
    for (double v : values) bmean += v;
    bmean /= bn;
    double bm2 = 0.0;
    for (double v : values) bm2 += (v - bmean) * (v - bmean);
    merge(Moments{bn, bmean, bm2});
}

void NormAccumulator::Moments::merge(const Moments& o) {
    if (o.n == 0.0) return;
    const double total = n + o.n;
    const double delta = o.mean - mean;
    mean += delta * o.n / total;
    m2 += o.m2 + delta * delta * n * o.n / total;
    n = total;
}

void NormAccumulator::add(const Decomposition& sample) {
    require_same_layout(sample.upsampled, sample.residual, "fit_norm_stats");
    if (!catalog_) {
        catalog_ = sample.upsampled.catalog_ptr();
        x_.resize(catalog_->size());
        r_.resize(catalog_->size());
    } else if (!(*catalog_ == sample.upsampled.catalog())) {
        throw ValidationError("fit_norm_stats: channel catalog changed within the sample stream");
    }
    for (std::size_t c = 0; c < catalog_->size(); ++c) {
        x_[c].add(sample.upsampled.channel(c));
        r_[c].add(sample.residual.channel(c));
    }
    ++samples_;
}

void NormAccumulator::merge(const NormAccumulator& other) {
    if (!other.catalog_) return;
    if (!catalog_) {
        *this = other;
        return;
    }
    if (!(*catalog_ == *other.catalog_)) throw ValidationError("NormAccumulator: catalog mismatch");
    for (std::size_t c = 0; c < x_.size(); ++c) {
        x_[c].merge(other.x_[c]);
        r_[c].merge(other.r_[c]);
    }
    samples_ += other.samples_;
}

NormStats NormAccumulator::finish() const {
    if (samples_ < 2) {
        throw ValidationError("fit_norm_stats: at least 2 samples are required, got " +
                              std::to_string(samples_));
    }
    NormStats s;
    s.channels = catalog_->names();
    s.catalog_hash = catalog_->hash();
    s.count = samples_;
    auto finish_one = [&](const Moments& m, const std::string& name, const char* kind) {
        const double sigma = std::sqrt(m.m2 / m.n);
        if (!(sigma > 1e-12 * std::max(1.0, std::abs(m.mean)))) {
            throw ValidationError("fit_norm_stats: channel '" + name + "' has zero variance (" + kind + ")");
        }
        return std::pair{m.mean, sigma};
    };
    for (std::size_t c = 0; c < x_.size(); ++c) {
        auto [mx, sx] = finish_one(x_[c], s.channels[c], "input");
        auto [mr, sr] = finish_one(r_[c], s.channels[c], "residual");
        s.mu_x.push_back(mx);
        s.sigma_x.push_back(sx);
        s.mu_r.push_back(mr);
        s.sigma_r.push_back(sr);
    }
    return s;
}

NormStats fit_norm_stats(std::span<const Decomposition> samples) {
    NormAccumulator acc;
    for (const auto& s : samples) acc.add(s);
    return acc.finish();
}

nlohmann::json NormStats::to_json() const {
    return {{"channels", channels}, {"catalog_hash", catalog_hash}, {"count", count},
            {"mu_x", mu_x},         {"sigma_x", sigma_x},           {"mu_r", mu_r},
            {"sigma_r", sigma_r}};
}

NormStats NormStats::from_json(const nlohmann::json& j) {
    NormStats s;
    try {
        j.at("channels").get_to(s.channels);
        j.at("catalog_hash").get_to(s.catalog_hash);
        j.at("count").get_to(s.count);
        j.at("mu_x").get_to(s.mu_x);
        j.at("sigma_x").get_to(s.sigma_x);
        j.at("mu_r").get_to(s.mu_r);
        j.at("sigma_r").get_to(s.sigma_r);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("NormStats JSON: ") + e.what());
    }
    const std::size_t n = s.channels.size();
    if (s.mu_x.size() != n || s.sigma_x.size() != n || s.mu_r.size() != n || s.sigma_r.size() != n) {
        throw ValidationError("NormStats JSON: array lengths do not match the channel list");
    }
    for (std::size_t c = 0; c < n; ++c) {
        if (!(s.sigma_x[c] > 0.0) || !(s.sigma_r[c] > 0.0)) {
            throw ValidationError("NormStats JSON: non-positive sigma for channel " + s.channels[c]);
        }
    }
    return s;
}

std::string NormStats::hash() const { return sha256_hex(to_json().dump()); }

namespace {

Field affine(const Field& f, const NormStats& stats, NormKind kind, bool forward) {
    if (f.catalog().names() != stats.channels) {
        throw ValidationError("normalize: field channels do not match the statistics");
    }
    const auto& mu = kind == NormKind::input ? stats.mu_x : stats.mu_r;
    const auto& sigma = kind == NormKind::input ? stats.sigma_x : stats.sigma_r;
    std::vector<double> out(f.values().size());
    const std::size_t plane = f.plane_size();
    for (std::size_t c = 0; c < f.n_channels(); ++c) {
        const auto in = f.channel(c);
        double* o = out.data() + c * plane;
        if (forward) {
            for (std::size_t i = 0; i < plane; ++i) o[i] = (in[i] - mu[c]) / sigma[c];
        } else {
            for (std::size_t i = 0; i < plane; ++i) o[i] = in[i] * sigma[c] + mu[c];
        }
    }
    return f.with_values(std::move(out));
}

}  // namespace

Field normalize(const Field& f, const NormStats& stats, NormKind kind) {
    return affine(f, stats, kind, true);
}

Field denormalize(const Field& f, const NormStats& stats, NormKind kind) {
    return affine(f, stats, kind, false);
}

ResidualSample make_residual_sample(const Decomposition& d, const NormStats& stats) {
    return {normalize(d.upsampled, stats, NormKind::input), normalize(d.residual, stats, NormKind::residual),
            d.residual.timestamp()};
}

}  // namespace fmsr
