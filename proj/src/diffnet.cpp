#include "fmsr/diffnet.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>

#include "fmsr/errors.hpp"
#include "fmsr/rng.hpp"
#include "fmsr/store.hpp"

namespace fmsr {

namespace {

std::atomic<std::uint64_t> g_next_net_id{1};

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ConstMap = Eigen::Map<const RowMat<S>>;
template <typename S>
using MutMap = Eigen::Map<RowMat<S>>;

// Slice indices in layout order.
constexpr std::size_t kEmbedW = 0, kEmbedB = 1, kInW = 2, kInB = 3, kBlockBase = 4, kPerBlock = 6;
constexpr std::size_t kConv1W = 0, kConv1B = 1, kFilmW = 2, kFilmB = 3, kConv2W = 4, kConv2B = 5;

std::size_t block_slice(std::size_t b, std::size_t which) { return kBlockBase + b * kPerBlock + which; }

std::vector<ParamSlice> make_layout(const NetArch& a) {
    std::vector<ParamSlice> out;
    std::size_t offset = 0;
    auto add = [&](std::string name, std::size_t size, std::size_t fan_in) {
        out.push_back({std::move(name), offset, size, fan_in});
        offset += size;
    };
    const std::size_t k2 = a.kernel * a.kernel;
    const std::size_t w = a.width;
    add("embed.weight", w * a.embed_dim(), a.embed_dim());
    add("embed.bias", w, a.embed_dim());
    add("in.weight", w * a.input_planes() * k2, a.input_planes() * k2);
    add("in.bias", w, a.input_planes() * k2);
    for (std::size_t b = 0; b < a.n_blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        add(p + "conv1.weight", w * w * k2, w * k2);
        add(p + "conv1.bias", w, w * k2);
        add(p + "film.weight", 2 * w * w, w);
        add(p + "film.bias", 2 * w, w);
        add(p + "conv2.weight", w * w * k2, w * k2);
        add(p + "conv2.bias", w, w * k2);
    }
    add("out.weight", a.n_channels * w * k2, w * k2);
    add("out.bias", a.n_channels, w * k2);
    return out;
}

template <typename S>
S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

template <typename S>
void silu(std::span<const S> in, std::vector<S>& out) {
    out.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * sigmoid(in[i]);
}

// grad *= d silu(x) / dx
template <typename S>
void silu_backward(std::span<const S> x, std::span<S> grad) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const S s = sigmoid(x[i]);
        grad[i] *= s * (S(1) + x[i] * (S(1) - s));
    }
}

// col[(c*k + dy)*k + dx][y*W + x] = in[c][clamp(y + dy - pad)][wrap(x + dx - pad)]
template <typename S>
void im2col(const S* in, std::size_t C, std::size_t H, std::size_t W, std::size_t k, S* col) {
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto h = static_cast<std::ptrdiff_t>(H);
    const auto w = static_cast<std::ptrdiff_t>(W);
    const std::size_t P = H * W;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t dy = 0; dy < k; ++dy) {
            for (std::size_t dx = 0; dx < k; ++dx) {
                S* dst = col + ((c * k + dy) * k + dx) * P;
                const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
                for (std::ptrdiff_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = std::clamp<std::ptrdiff_t>(y + static_cast<std::ptrdiff_t>(dy) - pad, 0, h - 1);
                    const S* src = in + (static_cast<std::ptrdiff_t>(c) * h + sy) * w;
                    S* d = dst + y * w;
                    for (std::ptrdiff_t x = 0; x < w; ++x) {
                        std::ptrdiff_t sx = x + ox;
                        if (sx < 0) sx += w;
                        else if (sx >= w) sx -= w;
                        d[x] = src[sx];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: out[c][...] += col entries that were read from it.
template <typename S>
void col2im(const S* col, std::size_t C, std::size_t H, std::size_t W, std::size_t k, S* out) {
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto h = static_cast<std::ptrdiff_t>(H);
    const auto w = static_cast<std::ptrdiff_t>(W);
    const std::size_t P = H * W;
    std::fill(out, out + C * P, S(0));
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t dy = 0; dy < k; ++dy) {
            for (std::size_t dx = 0; dx < k; ++dx) {
                const S* src = col + ((c * k + dy) * k + dx) * P;
                const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
                for (std::ptrdiff_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = std::clamp<std::ptrdiff_t>(y + static_cast<std::ptrdiff_t>(dy) - pad, 0, h - 1);
                    S* d = out + (static_cast<std::ptrdiff_t>(c) * h + sy) * w;
                    const S* s = src + y * w;
                    for (std::ptrdiff_t x = 0; x < w; ++x) {
                        std::ptrdiff_t sx = x + ox;
                        if (sx < 0) sx += w;
                        else if (sx >= w) sx -= w;
                        d[sx] += s[x];
                    }
                }
            }
        }
    }
}

template <typename S>
struct ConvShape {
    std::size_t c_in, c_out, H, W, k;
    std::size_t P() const { return H * W; }
    std::size_t rows() const { return c_in * k * k; }
};

// out = weight * im2col(in) + bias
template <typename S>
void conv_forward(const ConvShape<S>& s, const S* weight, const S* bias, const S* in, std::vector<S>& col,
                  S* out) {
    col.resize(s.rows() * s.P());
    im2col(in, s.c_in, s.H, s.W, s.k, col.data());
    ConstMap<S> wm(weight, s.c_out, s.rows());
    ConstMap<S> cm(col.data(), s.rows(), s.P());
    MutMap<S> om(out, s.c_out, s.P());
    om.noalias() = wm * cm;
    for (std::size_t o = 0; o < s.c_out; ++o) om.row(o).array() += bias[o];
}

// Accumulates weight/bias gradients; writes the input gradient if d_in is non-null.
template <typename S>
void conv_backward(const ConvShape<S>& s, const S* weight, const S* in, const S* d_out, std::vector<S>& col,
                   S* d_weight, S* d_bias, S* d_in) {
    col.resize(s.rows() * s.P());
    im2col(in, s.c_in, s.H, s.W, s.k, col.data());
    ConstMap<S> dom(d_out, s.c_out, s.P());
    {
        ConstMap<S> cm(col.data(), s.rows(), s.P());
        MutMap<S> dwm(d_weight, s.c_out, s.rows());
        dwm.noalias() += dom * cm.transpose();
    }
    for (std::size_t o = 0; o < s.c_out; ++o) d_bias[o] += dom.row(o).sum();
    if (d_in) {
        ConstMap<S> wm(weight, s.c_out, s.rows());
        MutMap<S> dcm(col.data(), s.rows(), s.P());
        dcm.noalias() = wm.transpose() * dom;
        col2im(col.data(), s.c_in, s.H, s.W, s.k, d_in);
    }
}

}  // namespace

void NetArch::validate() const {
    if (n_channels == 0) throw ValidationError("NetArch: n_channels must be positive");
    if (width == 0) throw ValidationError("NetArch: width must be positive");
    if (kernel == 0 || kernel % 2 == 0) throw ValidationError("NetArch: kernel must be odd");
    if (n_freq == 0) throw ValidationError("NetArch: n_freq must be positive");
}

nlohmann::json NetArch::to_json() const {
    return {{"n_channels", n_channels}, {"n_cond", n_cond}, {"width", width},
            {"n_blocks", n_blocks},     {"kernel", kernel}, {"n_freq", n_freq}};
}

NetArch NetArch::from_json(const nlohmann::json& j) {
    NetArch a;
    try {
        j.at("n_channels").get_to(a.n_channels);
        j.at("n_cond").get_to(a.n_cond);
        j.at("width").get_to(a.width);
        j.at("n_blocks").get_to(a.n_blocks);
        j.at("kernel").get_to(a.kernel);
        j.at("n_freq").get_to(a.n_freq);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("network architecture JSON: ") + e.what());
    }
    a.validate();
    return a;
}

template <typename Scalar>
VelocityNet<Scalar>::VelocityNet(NetArch arch)
    : arch_(arch), layout_(make_layout(arch)), id_(g_next_net_id++) {
    arch_.validate();
    params_.assign(layout_.back().offset + layout_.back().size, Scalar(0));
}

template <typename Scalar>
VelocityNet<Scalar>::VelocityNet(const VelocityNet& other)
    : arch_(other.arch_), layout_(other.layout_), params_(other.params_), id_(g_next_net_id++) {}

template <typename Scalar>
VelocityNet<Scalar>& VelocityNet<Scalar>::operator=(const VelocityNet& other) {
    if (this != &other) {
        arch_ = other.arch_;
        layout_ = other.layout_;
        params_ = other.params_;
        id_ = g_next_net_id++;
        version_ = 0;
    }
    return *this;
}

template <typename Scalar>
void VelocityNet<Scalar>::initialize(std::uint64_t seed, bool zero_output) {
    ++version_;
    for (std::size_t i = 0; i < layout_.size(); ++i) {
        const auto& s = layout_[i];
        const bool is_output = s.name.rfind("out.", 0) == 0;
        Rng rng = Rng::keyed(seed, {i});
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
        for (std::size_t k = 0; k < s.size; ++k) {
            params_[s.offset + k] =
                (is_output && zero_output) ? Scalar(0) : static_cast<Scalar>(bound * (2.0 * rng.uniform() - 1.0));
        }
    }
}

template <typename Scalar>
const ParamSlice& VelocityNet<Scalar>::slice(const std::string& name) const {
    for (const auto& s : layout_) {
        if (s.name == name) return s;
    }
    throw ValidationError("VelocityNet: no parameter named '" + name + "'");
}

template <typename Scalar>
std::vector<Scalar> time_embedding(double tau, std::size_t n_freq) {
    std::vector<Scalar> e(2 * n_freq);
    for (std::size_t i = 0; i < n_freq; ++i) {
        const double frac = n_freq > 1 ? static_cast<double>(i) / static_cast<double>(n_freq - 1) : 0.0;
        const double omega = std::pow(100.0, frac);
        e[i] = static_cast<Scalar>(std::sin(omega * tau));
        e[n_freq + i] = static_cast<Scalar>(std::cos(omega * tau));
    }
    return e;
}

template <typename Scalar>
std::vector<Scalar> forward(const VelocityNet<Scalar>& net, std::span<const Scalar> noisy,
                            std::span<const Scalar> cond, std::size_t n_lat, std::size_t n_lon, double tau,
                            Tape<Scalar>* tape) {
    using S = Scalar;
    const NetArch& a = net.arch();
    const std::size_t P = n_lat * n_lon;
    const std::size_t Wd = a.width;
    const std::size_t E = a.embed_dim();
    if (noisy.size() != a.n_channels * P || cond.size() != a.n_cond * P) {
        throw ValidationError("VelocityNet forward: input shape does not match the architecture");
    }
    const auto& L = net.layout();
    const S* p = net.params().data();
    auto at = [&](std::size_t idx) { return p + L[idx].offset; };

    std::vector<S> embed = time_embedding<S>(tau, a.n_freq);
    std::vector<S> g_pre(Wd), g(Wd);
    for (std::size_t i = 0; i < Wd; ++i) {
        S acc = at(kEmbedB)[i];
        for (std::size_t e = 0; e < E; ++e) acc += at(kEmbedW)[i * E + e] * embed[e];
        g_pre[i] = acc;
        g[i] = acc * sigmoid(acc);
    }

    std::vector<S> input(a.input_planes() * P);
    std::copy(noisy.begin(), noisy.end(), input.begin());
    std::copy(cond.begin(), cond.end(), input.begin() + a.n_channels * P);
    for (std::size_t e = 0; e < E; ++e) {
        std::fill_n(input.begin() + (a.n_channels + a.n_cond + e) * P, P, embed[e]);
    }

    std::vector<S> col, h(Wd * P), act, u1(Wd * P), u3(Wd * P);
    conv_forward(ConvShape<S>{a.input_planes(), Wd, n_lat, n_lon, a.kernel}, at(kInW), at(kInB), input.data(),
                 col, h.data());

    if (tape) {
        tape->net_id = net.id();
        tape->net_version = net.version();
        tape->n_lat = n_lat;
        tape->n_lon = n_lon;
        tape->embed = embed;
        tape->embed_pre = g_pre;
        tape->input = std::move(input);
        tape->block_in.assign(a.n_blocks + 1, {});
        tape->conv1_out.assign(a.n_blocks, {});
        tape->film_out.assign(a.n_blocks, {});
        tape->film_scale.assign(a.n_blocks, {});
    }

    const ConvShape<S> inner{Wd, Wd, n_lat, n_lon, a.kernel};
    std::vector<S> film(2 * Wd);
    for (std::size_t b = 0; b < a.n_blocks; ++b) {
        if (tape) tape->block_in[b] = h;
        silu<S>(h, act);
        conv_forward(inner, at(block_slice(b, kConv1W)), at(block_slice(b, kConv1B)), act.data(), col, u1.data());
        if (tape) tape->conv1_out[b] = u1;
        const S* fw = at(block_slice(b, kFilmW));
        const S* fb = at(block_slice(b, kFilmB));
        for (std::size_t i = 0; i < 2 * Wd; ++i) {
            S acc = fb[i];
            for (std::size_t j = 0; j < Wd; ++j) acc += fw[i * Wd + j] * g[j];
            film[i] = acc;
        }
        for (std::size_t c = 0; c < Wd; ++c) {
            const S scale = S(1) + film[c];
            const S shift = film[Wd + c];
            S* row = u1.data() + c * P;
            for (std::size_t q = 0; q < P; ++q) row[q] = row[q] * scale + shift;
        }
        if (tape) {
            tape->film_out[b] = u1;
            tape->film_scale[b].assign(film.begin(), film.begin() + Wd);
        }
        silu<S>(u1, act);
        conv_forward(inner, at(block_slice(b, kConv2W)), at(block_slice(b, kConv2B)), act.data(), col, u3.data());
        for (std::size_t q = 0; q < Wd * P; ++q) h[q] += u3[q];
    }
    if (tape) tape->block_in[a.n_blocks] = h;

    silu<S>(h, act);
    const std::size_t out_idx = kBlockBase + a.n_blocks * kPerBlock;
    std::vector<S> out(a.n_channels * P);
    conv_forward(ConvShape<S>{Wd, a.n_channels, n_lat, n_lon, a.kernel}, at(out_idx), at(out_idx + 1), act.data(),
                 col, out.data());
    return out;
}

template <typename Scalar>
std::vector<Scalar> backward(const VelocityNet<Scalar>& net, const Tape<Scalar>& tape,
                             std::span<const Scalar> upstream) {
    using S = Scalar;
    if (tape.net_id != net.id() || tape.net_version != net.version()) {
        throw ValidationError("VelocityNet backward: stale tape (parameters changed since the forward pass)");
    }
    const NetArch& a = net.arch();
    const std::size_t H = tape.n_lat, W = tape.n_lon, P = H * W;
    const std::size_t Wd = a.width;
    const std::size_t E = a.embed_dim();
    if (upstream.size() != a.n_channels * P) {
        throw ValidationError("VelocityNet backward: upstream gradient has the wrong shape");
    }
    const auto& L = net.layout();
    const S* p = net.params().data();
    auto at = [&](std::size_t idx) { return p + L[idx].offset; };
    std::vector<S> grad(net.param_count(), S(0));
    auto g_at = [&](std::size_t idx) { return grad.data() + L[idx].offset; };

    std::vector<S> g(Wd);
    for (std::size_t i = 0; i < Wd; ++i) g[i] = tape.embed_pre[i] * sigmoid(tape.embed_pre[i]);

    std::vector<S> col, act, dh(Wd * P), da(Wd * P), du(Wd * P);
    const std::size_t out_idx = kBlockBase + a.n_blocks * kPerBlock;

    silu<S>(tape.block_in[a.n_blocks], act);
    conv_backward(ConvShape<S>{Wd, a.n_channels, H, W, a.kernel}, at(out_idx), act.data(), upstream.data(), col,
                  g_at(out_idx), g_at(out_idx + 1), dh.data());
    silu_backward<S>(tape.block_in[a.n_blocks], dh);

    const ConvShape<S> inner{Wd, Wd, H, W, a.kernel};
    std::vector<S> dg(Wd, S(0)), dfilm(2 * Wd);
    for (std::size_t bi = a.n_blocks; bi-- > 0;) {
        // h_out = h_in + conv2(silu(film_out))
        silu<S>(tape.film_out[bi], act);
        conv_backward(inner, at(block_slice(bi, kConv2W)), act.data(), dh.data(), col, g_at(block_slice(bi, kConv2W)),
                      g_at(block_slice(bi, kConv2B)), du.data());
        silu_backward<S>(tape.film_out[bi], du);

        // film_out = conv1_out * (1 + scale) + shift
        const auto& u1 = tape.conv1_out[bi];
        for (std::size_t c = 0; c < Wd; ++c) {
            S ds = 0, dsh = 0;
            const S scale = S(1) + tape.film_scale[bi][c];
            S* drow = du.data() + c * P;
            const S* urow = u1.data() + c * P;
            for (std::size_t q = 0; q < P; ++q) {
                ds += drow[q] * urow[q];
                dsh += drow[q];
                drow[q] *= scale;
            }
            dfilm[c] = ds;
            dfilm[Wd + c] = dsh;
        }
        const S* fw = at(block_slice(bi, kFilmW));
        S* dfw = g_at(block_slice(bi, kFilmW));
        S* dfb = g_at(block_slice(bi, kFilmB));
        for (std::size_t i = 0; i < 2 * Wd; ++i) {
            dfb[i] += dfilm[i];
            for (std::size_t j = 0; j < Wd; ++j) {
                dfw[i * Wd + j] += dfilm[i] * g[j];
                dg[j] += fw[i * Wd + j] * dfilm[i];
            }
        }

        // conv1_out = conv1(silu(h_in))
        silu<S>(tape.block_in[bi], act);
        conv_backward(inner, at(block_slice(bi, kConv1W)), act.data(), du.data(), col, g_at(block_slice(bi, kConv1W)),
                      g_at(block_slice(bi, kConv1B)), da.data());
        silu_backward<S>(tape.block_in[bi], da);
        for (std::size_t q = 0; q < Wd * P; ++q) dh[q] += da[q];
    }

    conv_backward(ConvShape<S>{a.input_planes(), Wd, H, W, a.kernel}, at(kInW), tape.input.data(), dh.data(), col,
                  g_at(kInW), g_at(kInB), static_cast<S*>(nullptr));

    S* dew = g_at(kEmbedW);
    S* deb = g_at(kEmbedB);
    for (std::size_t i = 0; i < Wd; ++i) {
        const S x = tape.embed_pre[i];
        const S s = sigmoid(x);
        const S dpre = dg[i] * s * (S(1) + x * (S(1) - s));
        deb[i] += dpre;
        for (std::size_t e = 0; e < E; ++e) dew[i * E + e] += dpre * tape.embed[e];
    }
    return grad;
}

Field forward(const VelocityNet<float>& net, const Field& noisy_residual, const Field& conditioning, double tau) {
    if (!(noisy_residual.grid() == conditioning.grid())) {
        throw ValidationError("VelocityNet forward: residual and conditioning grids differ");
    }
    const auto& a = net.arch();
    if (noisy_residual.n_channels() != a.n_channels || conditioning.n_channels() != a.n_cond) {
        throw ValidationError("VelocityNet forward: channel counts do not match the architecture");
    }
    std::vector<float> x(noisy_residual.values().begin(), noisy_residual.values().end());
    std::vector<float> c(conditioning.values().begin(), conditioning.values().end());
    std::vector<float> y = forward<float>(net, x, c, noisy_residual.n_lat(), noisy_residual.n_lon(), tau);
    return noisy_residual.with_values(std::vector<double>(y.begin(), y.end()));
}

template class VelocityNet<float>;
template class VelocityNet<double>;
template std::vector<float> time_embedding<float>(double, std::size_t);
template std::vector<double> time_embedding<double>(double, std::size_t);
template std::vector<float> forward<float>(const VelocityNet<float>&, std::span<const float>, std::span<const float>,
                                           std::size_t, std::size_t, double, Tape<float>*);
template std::vector<double> forward<double>(const VelocityNet<double>&, std::span<const double>,
                                             std::span<const double>, std::size_t, std::size_t, double, Tape<double>*);
template std::vector<float> backward<float>(const VelocityNet<float>&, const Tape<float>&, std::span<const float>);
template std::vector<double> backward<double>(const VelocityNet<double>&, const Tape<double>&,
                                              std::span<const double>);

void save_checkpoint(const std::string& prefix, const VelocityNet<float>& net, const CheckpointInfo& info) {
    nlohmann::json header = {
        {"kind", "checkpoint"},
        {"architecture", net.arch().to_json()},
        {"catalog_hash", info.catalog_hash},
        {"norm_stats_hash", info.norm_stats_hash},
        {"param_count", net.param_count()},
    };
    nlohmann::json slices = nlohmann::json::array();
    for (const auto& s : net.layout()) slices.push_back({{"name", s.name}, {"offset", s.offset}, {"size", s.size}});
    header["layout"] = std::move(slices);
    write_record(prefix, std::move(header), net.params());
}

VelocityNet<float> load_checkpoint(const std::string& prefix, CheckpointInfo* info) {
    Record rec = read_record(prefix, "checkpoint");
    NetArch arch;
    std::string catalog_hash, stats_hash;
    try {
        arch = NetArch::from_json(rec.header.at("architecture"));
        rec.header.at("catalog_hash").get_to(catalog_hash);
        rec.header.at("norm_stats_hash").get_to(stats_hash);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("checkpoint " + prefix + ": " + e.what());
    }
    VelocityNet<float> net(arch);
    if (rec.blob.size() != net.param_count()) {
        throw ValidationError("checkpoint " + prefix + ": parameter count " + std::to_string(rec.blob.size()) +
                              " does not match the architecture (" + std::to_string(net.param_count()) + ")");
    }
    std::copy(rec.blob.begin(), rec.blob.end(), net.mutable_params().begin());
    if (info) *info = {arch, catalog_hash, stats_hash};
    return net;
}

}  // namespace fmsr
