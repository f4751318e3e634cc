#pragma once

// Network family: encoder, posterior heads, latent transforms, decoder, and
// the shared discriminator / mutual-information trunk, bundled with their
// optimiser state.
//
// Three variants share the skeleton and differ only in how the latent is
// produced and consumed:
//   vae   - dense posterior heads over flattened features, dense map ahead of
//           the decoder, latent handled as one flat block [N, L, 1, 1];
//   cvae  - 1x1 convolutional heads, identity latent transforms;
//   crvae - 1x1 convolutional heads plus LSTM-over-channel-blocks transforms
//           on both the variance path and the generation path.

#include <algorithm>
#include <functional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "crvae/adam.hpp"
#include "crvae/hash.hpp"
#include "crvae/latent.hpp"
#include "crvae/ops.hpp"

namespace crvae {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

enum class Variant { vae, cvae, crvae };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::vae: return "vae";
        case Variant::cvae: return "cvae";
        case Variant::crvae: return "crvae";
    }
    throw ConfigError("unknown variant enum value");
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "vae") return Variant::vae;
    if (s == "cvae") return Variant::cvae;
    if (s == "crvae") return Variant::crvae;
    throw ConfigError("unknown variant '" + s + "' (expected vae|cvae|crvae)");
}

// Output nonlinearity of the decoder, which also fixes the pixel value range
// the encoder accepts: tanh -> [-1,1], logistic -> [0,1].
enum class OutputAct { tanh_sym, logistic01 };

inline std::string output_act_name(OutputAct a) {
    return a == OutputAct::tanh_sym ? "tanh" : "logistic";
}

inline OutputAct output_act_from_name(const std::string& s) {
    if (s == "tanh") return OutputAct::tanh_sym;
    if (s == "logistic") return OutputAct::logistic01;
    throw ConfigError("unknown output activation '" + s + "'");
}

struct ConvStage {
    int width = 0;   // output channels
    int stride = 1;  // in the decoder, stride > 1 means transposed (upsampling)
    int ksize = 3;
    int pad = 1;

    bool operator==(const ConvStage&) const = default;
};

struct NetworkSpec {
    Variant variant = Variant::crvae;
    int image_c = 3, image_h = 32, image_w = 32;
    int latent_c = 32, latent_h = 4, latent_w = 4;
    int steps = 8;  // channel blocks traversed by the recurrence
    OutputAct out_act = OutputAct::tanh_sym;
    double leak = 0.1;  // leaky-relu slope used throughout
    std::vector<ConvStage> encoder;
    std::vector<ConvStage> decoder;
    std::vector<ConvStage> trunk;

    bool operator==(const NetworkSpec&) const = default;

    static NetworkSpec defaults(Variant v = Variant::crvae) {
        NetworkSpec s;
        s.variant = v;
        s.encoder = {{32, 2, 3, 1}, {64, 2, 3, 1}, {128, 2, 3, 1}, {128, 1, 3, 1}};
        s.decoder = {{128, 1, 3, 1}, {64, 2, 4, 1}, {32, 2, 4, 1}, {3, 2, 4, 1}};
        s.trunk = {{32, 2, 4, 1}, {64, 2, 4, 1}, {128, 2, 4, 1}};
        s.validate();
        return s;
    }

    // Mid-size preset: full 32x32 images with slimmer stacks than the default,
    // for training runs under a wall-clock budget.
    static NetworkSpec small(Variant v = Variant::crvae) {
        NetworkSpec s;
        s.variant = v;
        s.encoder = {{16, 2, 3, 1}, {32, 2, 3, 1}, {64, 2, 3, 1}};
        s.decoder = {{64, 1, 3, 1}, {32, 2, 4, 1}, {16, 2, 4, 1}, {3, 2, 4, 1}};
        s.trunk = {{16, 2, 4, 1}, {32, 2, 4, 1}, {64, 2, 4, 1}};
        s.validate();
        return s;
    }

    // Small configuration for fast tests: 3x8x8 images, 8x2x2 latent, 2 steps.
    static NetworkSpec tiny(Variant v = Variant::crvae) {
        NetworkSpec s;
        s.variant = v;
        s.image_h = s.image_w = 8;
        s.latent_c = 8;
        s.latent_h = s.latent_w = 2;
        s.steps = 2;
        s.encoder = {{8, 2, 3, 1}, {16, 2, 3, 1}};
        s.decoder = {{16, 1, 3, 1}, {8, 2, 4, 1}, {3, 2, 4, 1}};
        s.trunk = {{8, 2, 4, 1}, {16, 2, 4, 1}};
        s.validate();
        return s;
    }

    int block_channels() const { return latent_c / steps; }
    int block_len() const { return block_channels() * latent_h * latent_w; }
    int latent_len() const { return latent_c * latent_h * latent_w; }

    // Latent tensors as they flow through posterior/sampling/KL: the vae packs
    // everything into one flat channel block.
    Shape posterior_shape(int batch) const {
        if (variant == Variant::vae) return {batch, latent_len(), 1, 1};
        return {batch, latent_c, latent_h, latent_w};
    }

    // Steps seen by block-level code (KL split, sampling tasks).
    int effective_steps() const { return variant == Variant::vae ? 1 : steps; }

    struct Walk {
        int c, h, w;
    };

    // Spatial bookkeeping through a stage list; `transposed_decoder` switches
    // strided stages to upsampling geometry.
    static Walk walk_stages(Walk in, const std::vector<ConvStage>& stages, bool transposed_decoder) {
        Walk cur = in;
        for (const ConvStage& st : stages) {
            if (st.width < 1 || st.ksize < 1 || st.stride < 1 || st.pad < 0) {
                throw ConfigError("conv stage with non-positive width/ksize/stride or negative pad");
            }
            if (transposed_decoder && st.stride > 1) {
                cur.h = (cur.h - 1) * st.stride - 2 * st.pad + st.ksize;
                cur.w = (cur.w - 1) * st.stride - 2 * st.pad + st.ksize;
                if (cur.h < 1 || cur.w < 1) throw ConfigError("decoder stage collapses spatial extent");
            } else {
                cur.h = conv_out_dim(cur.h, st.ksize, st.stride, st.pad);
                cur.w = conv_out_dim(cur.w, st.ksize, st.stride, st.pad);
            }
            cur.c = st.width;
        }
        return cur;
    }

    Walk encoder_out() const { return walk_stages({image_c, image_h, image_w}, encoder, false); }
    Walk trunk_out() const { return walk_stages({image_c, image_h, image_w}, trunk, false); }

    void validate() const {
        if (image_c < 1 || image_h < 1 || image_w < 1) throw ConfigError("image dims must be positive");
        if (latent_c < 1 || latent_h < 1 || latent_w < 1) throw ConfigError("latent dims must be positive");
        if (steps < 1) throw ConfigError("step count must be >= 1");
        if (latent_c % steps != 0) {
            throw ConfigError("latent channels " + std::to_string(latent_c) +
                              " not divisible by step count " + std::to_string(steps));
        }
        if (!(leak >= 0.0 && leak < 1.0)) throw ConfigError("leak slope must be in [0,1)");
        if (encoder.empty() || decoder.empty() || trunk.empty()) {
            throw ConfigError("encoder, decoder and trunk stage lists must be non-empty");
        }
        const Walk enc = encoder_out();
        if (variant != Variant::vae && (enc.h != latent_h || enc.w != latent_w)) {
            throw ConfigError("encoder output " + std::to_string(enc.h) + "x" + std::to_string(enc.w) +
                              " must match the latent grid " + std::to_string(latent_h) + "x" +
                              std::to_string(latent_w) + " for convolutional heads");
        }
        const Walk dec = walk_stages({latent_c, latent_h, latent_w}, decoder, true);
        if (dec.c != image_c || dec.h != image_h || dec.w != image_w) {
            throw ConfigError("decoder produces " + std::to_string(dec.c) + "x" + std::to_string(dec.h) +
                              "x" + std::to_string(dec.w) + ", expected the image shape " +
                              std::to_string(image_c) + "x" + std::to_string(image_h) + "x" +
                              std::to_string(image_w));
        }
        const Walk tr = trunk_out();
        if (variant != Variant::vae && (tr.h != latent_h || tr.w != latent_w)) {
            throw ConfigError("trunk output grid " + std::to_string(tr.h) + "x" + std::to_string(tr.w) +
                              " must match the latent grid for the 1x1 prediction head");
        }
        if (tr.h < 1 || tr.w < 1) throw ConfigError("trunk collapses the image completely");
    }
};

// ---------------------------------------------------------------------------
// parameters and layers
// ---------------------------------------------------------------------------

template <typename T>
struct Parameter {
    Tensor<T> value;
    AdamState<T> opt;
};

template <typename T>
struct ConvLayer {
    Parameter<T> kernel;  // [F,C,kh,kw]; for transposed layers F is the input side
    Parameter<T> bias;    // [out channels]
    int stride = 1, pad = 0;
    bool transposed = false;
};

template <typename T>
struct DenseLayer {
    Parameter<T> w;  // [O,I]
    Parameter<T> b;  // [O]
};

template <typename T>
struct LstmPath {
    Parameter<T> wx, wh, b;  // packed gates (input, forget, cell, output)
    DenseLayer<T> proj;      // square map back to the block length
};

namespace detail {

inline double glorot_bound(std::int64_t fan_in, std::int64_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename T>
ConvLayer<T> make_conv(int in_c, int out_c, int ksize, int stride, int pad, bool transposed,
                       Rng& rng) {
    ConvLayer<T> l;
    l.stride = stride;
    l.pad = pad;
    l.transposed = transposed;
    const std::int64_t k2 = static_cast<std::int64_t>(ksize) * ksize;
    const double a = glorot_bound(in_c * k2, out_c * k2);
    const Shape ks = transposed ? Shape{in_c, out_c, ksize, ksize} : Shape{out_c, in_c, ksize, ksize};
    l.kernel.value = rng.uniform_tensor<T>(ks, -a, a);
    l.bias.value = Tensor<T>({out_c});
    return l;
}

template <typename T>
DenseLayer<T> make_dense(int in, int out, Rng& rng) {
    DenseLayer<T> l;
    const double a = glorot_bound(in, out);
    l.w.value = rng.uniform_tensor<T>({out, in}, -a, a);
    l.b.value = Tensor<T>({out});
    return l;
}

// Forget-gate bias starts at 1 so early training does not flush cell state.
template <typename T>
LstmPath<T> make_lstm(int in, int hidden, Rng& rng) {
    LstmPath<T> l;
    const double ax = glorot_bound(in, hidden);
    const double ah = glorot_bound(hidden, hidden);
    l.wx.value = rng.uniform_tensor<T>({4 * hidden, in}, -ax, ax);
    l.wh.value = rng.uniform_tensor<T>({4 * hidden, hidden}, -ah, ah);
    l.b.value = Tensor<T>({4 * hidden});
    for (int i = hidden; i < 2 * hidden; ++i) l.b.value[i] = T(1);
    l.proj = make_dense<T>(hidden, hidden, rng);
    return l;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// model bundle
// ---------------------------------------------------------------------------

// Parameter groups, in fixed enumeration order. Which groups exist depends on
// the variant; see groups_for().
inline const std::vector<std::string>& all_group_names() {
    static const std::vector<std::string> g = {"encoder",  "mean_head", "var_head", "var_rnn",
                                               "gen_fc",   "gen_rnn",   "decoder",  "trunk",
                                               "disc_head", "mi_head"};
    return g;
}

inline std::vector<std::string> groups_for(Variant v) {
    switch (v) {
        case Variant::vae:
            return {"encoder", "mean_head", "var_head", "gen_fc", "decoder", "trunk", "disc_head",
                    "mi_head"};
        case Variant::cvae:
            return {"encoder", "mean_head", "var_head", "decoder", "trunk", "disc_head", "mi_head"};
        case Variant::crvae:
            return {"encoder", "mean_head", "var_head", "var_rnn", "gen_rnn", "decoder", "trunk",
                    "disc_head", "mi_head"};
    }
    throw ConfigError("unknown variant enum value");
}

template <typename T>
struct ModelBundle {
    NetworkSpec spec;
    bool disc_trained = false;  // set once adversarial phases have updated the trunk

    std::vector<ConvLayer<T>> encoder;
    DenseLayer<T> mean_fc, var_fc;     // vae posterior heads
    ConvLayer<T> mean_conv, var_conv;  // cvae / crvae posterior heads (1x1)
    LstmPath<T> var_rnn;               // crvae variance-path recurrence
    DenseLayer<T> gen_fc;              // vae latent-to-decoder map
    LstmPath<T> gen_rnn;               // crvae generation-path recurrence
    std::vector<ConvLayer<T>> decoder;
    std::vector<ConvLayer<T>> trunk;   // shared discriminator / MI feature stack
    DenseLayer<T> disc_head;
    ConvLayer<T> mi_conv;              // cvae / crvae MI head (1x1)
    DenseLayer<T> mi_fc;               // vae MI head

    // Fixed-order parameter walk; fn(group, name, Parameter&). The order is
    // part of the checkpoint format, so extend only at the end of a group.
    template <class Self, class Fn>
    static void visit_params(Self& self, Fn&& fn) {
        auto conv = [&fn](const std::string& prefix, auto& layer) {
            fn(prefix.substr(0, prefix.find('.')), prefix + ".kernel", layer.kernel);
            fn(prefix.substr(0, prefix.find('.')), prefix + ".bias", layer.bias);
        };
        auto conv_list = [&](const char* group, auto& layers) {
            for (std::size_t i = 0; i < layers.size(); ++i) {
                conv(std::string(group) + "." + std::to_string(i), layers[i]);
            }
        };
        auto dense = [&fn](const char* group, const std::string& prefix, auto& layer) {
            fn(group, prefix + ".w", layer.w);
            fn(group, prefix + ".b", layer.b);
        };
        auto lstm = [&fn, &dense](const char* group, auto& path) {
            fn(group, std::string(group) + ".wx", path.wx);
            fn(group, std::string(group) + ".wh", path.wh);
            fn(group, std::string(group) + ".b", path.b);
            dense(group, std::string(group) + ".proj", path.proj);
        };

        const Variant v = self.spec.variant;
        conv_list("encoder", self.encoder);
        if (v == Variant::vae) {
            dense("mean_head", "mean_head", self.mean_fc);
            dense("var_head", "var_head", self.var_fc);
        } else {
            conv("mean_head.0", self.mean_conv);
            conv("var_head.0", self.var_conv);
        }
        if (v == Variant::crvae) lstm("var_rnn", self.var_rnn);
        if (v == Variant::vae) dense("gen_fc", "gen_fc", self.gen_fc);
        if (v == Variant::crvae) lstm("gen_rnn", self.gen_rnn);
        conv_list("decoder", self.decoder);
        conv_list("trunk", self.trunk);
        dense("disc_head", "disc_head", self.disc_head);
        if (v == Variant::vae) {
            dense("mi_head", "mi_head", self.mi_fc);
        } else {
            conv("mi_head.0", self.mi_conv);
        }
    }

    template <class Fn>
    void for_each_param(Fn&& fn) {
        visit_params(*this, std::forward<Fn>(fn));
    }
    template <class Fn>
    void for_each_param(Fn&& fn) const {
        visit_params(*this, std::forward<Fn>(fn));
    }
};

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

// Builds and initialises a bundle. Weight draws happen in enumeration order
// from the given stream, so (spec, seed) fully determines the parameters.
template <typename T>
ModelBundle<T> build_bundle(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    ModelBundle<T> b;
    b.spec = spec;

    int c = spec.image_c;
    for (const ConvStage& st : spec.encoder) {
        b.encoder.push_back(detail::make_conv<T>(c, st.width, st.ksize, st.stride, st.pad, false, rng));
        c = st.width;
    }
    const NetworkSpec::Walk enc = spec.encoder_out();
    const int enc_flat = enc.c * enc.h * enc.w;
    const int L = spec.latent_len();

    if (spec.variant == Variant::vae) {
        b.mean_fc = detail::make_dense<T>(enc_flat, L, rng);
        b.var_fc = detail::make_dense<T>(enc_flat, L, rng);
    } else {
        b.mean_conv = detail::make_conv<T>(enc.c, spec.latent_c, 1, 1, 0, false, rng);
        b.var_conv = detail::make_conv<T>(enc.c, spec.latent_c, 1, 1, 0, false, rng);
    }
    if (spec.variant == Variant::crvae) {
        b.var_rnn = detail::make_lstm<T>(spec.block_len(), spec.block_len(), rng);
    }
    if (spec.variant == Variant::vae) {
        b.gen_fc = detail::make_dense<T>(L, L, rng);
    }
    if (spec.variant == Variant::crvae) {
        b.gen_rnn = detail::make_lstm<T>(spec.block_len(), spec.block_len(), rng);
    }

    c = spec.latent_c;
    for (const ConvStage& st : spec.decoder) {
        b.decoder.push_back(
            detail::make_conv<T>(c, st.width, st.ksize, st.stride, st.pad, st.stride > 1, rng));
        c = st.width;
    }

    c = spec.image_c;
    for (const ConvStage& st : spec.trunk) {
        b.trunk.push_back(detail::make_conv<T>(c, st.width, st.ksize, st.stride, st.pad, false, rng));
        c = st.width;
    }
    const NetworkSpec::Walk tr = spec.trunk_out();
    b.disc_head = detail::make_dense<T>(tr.c * tr.h * tr.w, 1, rng);
    if (spec.variant == Variant::vae) {
        b.mi_fc = detail::make_dense<T>(tr.c * tr.h * tr.w, L, rng);
    } else {
        b.mi_conv = detail::make_conv<T>(tr.c, spec.latent_c, 1, 1, 0, false, rng);
    }
    return b;
}

// ---------------------------------------------------------------------------
// parameter accounting
// ---------------------------------------------------------------------------

template <typename T>
std::int64_t param_count(const ModelBundle<T>& b) {
    std::int64_t n = 0;
    b.for_each_param([&](const std::string&, const std::string&, const Parameter<T>& p) {
        n += p.value.numel();
    });
    return n;
}

// Sum over the listed groups only; an empty list counts nothing. Unknown
// names (including groups the variant does not instantiate) are errors.
template <typename T>
std::int64_t param_count(const ModelBundle<T>& b, const std::vector<std::string>& groups) {
    const std::vector<std::string> active = groups_for(b.spec.variant);
    for (const std::string& g : groups) {
        if (std::find(active.begin(), active.end(), g) == active.end()) {
            throw ConfigError("unknown parameter group '" + g + "' for variant " +
                              variant_name(b.spec.variant));
        }
    }
    std::set<std::string> want(groups.begin(), groups.end());
    std::int64_t n = 0;
    b.for_each_param([&](const std::string& g, const std::string&, const Parameter<T>& p) {
        if (want.count(g)) n += p.value.numel();
    });
    return n;
}

// Bit-level digest of a group's parameter values, in enumeration order.
template <typename T>
std::uint64_t param_group_hash(const ModelBundle<T>& b, const std::string& group) {
    (void)param_count(b, {group});  // validates the name
    Fnv1a64 h;
    b.for_each_param([&](const std::string& g, const std::string&, const Parameter<T>& p) {
        if (g == group) h.update(p.value.data.data(), p.value.data.size() * sizeof(T));
    });
    return h.digest();
}

// ---------------------------------------------------------------------------
// binding parameters onto a tape
// ---------------------------------------------------------------------------

// Per-tape cache of parameter leaves. Groups named in grad_groups become
// differentiation targets; everything else is bound as a plain constant, so
// gradients flow through those layers without being collected there.
template <typename T>
class BindContext {
public:
    BindContext(Tape<T>& tape, ModelBundle<T>& bundle, std::set<std::string> grad_groups = {})
        : tape_(&tape), bundle_(&bundle), grad_groups_(std::move(grad_groups)) {
        const std::vector<std::string> active = groups_for(bundle.spec.variant);
        for (const std::string& g : grad_groups_) {
            if (std::find(active.begin(), active.end(), g) == active.end()) {
                throw ConfigError("grad group '" + g + "' not active for variant " +
                                  variant_name(bundle.spec.variant));
            }
        }
        // Bind every active parameter up front, in enumeration order, so leaf
        // creation order never depends on which forward ran first.
        bundle.for_each_param([&](const std::string& group, const std::string&, Parameter<T>& p) {
            const bool wants = grad_groups_.count(group) > 0;
            vals_.emplace(&p, tape.leaf(p.value, wants));
        });
    }

    // Binds parameters to caller-provided handles (one per parameter, in
    // enumeration order) instead of fresh leaves. Lets a finite-difference
    // harness own the parameter tensors directly.
    BindContext(Tape<T>& tape, ModelBundle<T>& bundle, const std::vector<Val<T>>& handles)
        : tape_(&tape), bundle_(&bundle) {
        std::size_t i = 0;
        bundle.for_each_param([&](const std::string&, const std::string& name, Parameter<T>& p) {
            if (i >= handles.size()) throw std::logic_error("too few handles for bundle");
            if (handles[i].value().shape != p.value.shape) {
                throw ShapeError("handle shape mismatch for " + name);
            }
            vals_.emplace(&p, handles[i++]);
        });
        if (i != handles.size()) throw std::logic_error("too many handles for bundle");
    }

    Tape<T>& tape() { return *tape_; }
    ModelBundle<T>& bundle() { return *bundle_; }
    const NetworkSpec& spec() const { return bundle_->spec; }

    Val<T> operator[](Parameter<T>& p) const {
        auto it = vals_.find(&p);
        if (it == vals_.end()) throw std::logic_error("parameter not bound on this context");
        return it->second;
    }

    bool is_grad_group(const std::string& g) const { return grad_groups_.count(g) > 0; }

    // Visit bound parameters of gradient groups in enumeration order.
    template <class Fn>
    void for_each_grad_param(Fn&& fn) {
        bundle_->for_each_param([&](const std::string& group, const std::string& name, Parameter<T>& p) {
            if (grad_groups_.count(group)) fn(group, name, p, (*this)[p]);
        });
    }

private:
    Tape<T>* tape_;
    ModelBundle<T>* bundle_;
    std::set<std::string> grad_groups_;
    std::unordered_map<const Parameter<T>*, Val<T>> vals_;
};

// ---------------------------------------------------------------------------
// forward passes
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
Val<T> conv_stack(BindContext<T>& ctx, Val<T> x, std::vector<ConvLayer<T>>& layers, double leak,
                  bool activate_last, OutputAct last_act) {
    Val<T> h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        ConvLayer<T>& l = layers[i];
        h = l.transposed ? deconv2d(h, ctx[l.kernel], l.stride, l.pad)
                         : conv2d(h, ctx[l.kernel], l.stride, l.pad);
        h = bias_nchw(h, ctx[l.bias]);
        if (i + 1 < layers.size() || activate_last) {
            h = leaky_relu(h, leak);
        } else {
            h = (last_act == OutputAct::tanh_sym) ? tanh(h) : logistic(h);
        }
    }
    return h;
}

template <typename T>
RecurrentVals<T> bind_lstm(BindContext<T>& ctx, LstmPath<T>& path) {
    return RecurrentVals<T>{ctx[path.wx], ctx[path.wh], ctx[path.b], ctx[path.proj.w],
                            ctx[path.proj.b]};
}

template <typename T>
std::pair<double, double> pixel_range(const NetworkSpec& s) {
    return s.out_act == OutputAct::tanh_sym ? std::pair<double, double>{-1.0, 1.0}
                                            : std::pair<double, double>{0.0, 1.0};
}

}  // namespace detail

// Feature stack over an input batch. Inputs must already live in the pixel
// range implied by the output activation; anything outside is a data bug.
template <typename T>
Val<T> encode(BindContext<T>& ctx, Val<T> x) {
    const NetworkSpec& s = ctx.spec();
    const Tensor<T>& xv = x.tape->value(x);
    if (xv.ndim() != 4 || xv.dim(1) != s.image_c || xv.dim(2) != s.image_h || xv.dim(3) != s.image_w) {
        throw ShapeError("encode: expected [N," + std::to_string(s.image_c) + "," +
                         std::to_string(s.image_h) + "," + std::to_string(s.image_w) + "], got " +
                         shape_str(xv.shape));
    }
    const auto [lo, hi] = detail::pixel_range<T>(s);
    for (std::int64_t i = 0; i < xv.numel(); ++i) {
        const double v = static_cast<double>(xv[i]);
        if (!std::isfinite(v) || v < lo - 1e-4 || v > hi + 1e-4) {
            throw DomainError("encode: input value " + std::to_string(v) + " outside [" +
                              std::to_string(lo) + "," + std::to_string(hi) + "]");
        }
    }
    return detail::conv_stack(ctx, x, ctx.bundle().encoder, s.leak, true, s.out_act);
}

template <typename T>
struct GaussianVals {
    Val<T> mu;
    Val<T> logvar;
};

// Posterior parameters from encoder features. The crvae variance path runs
// the raw head output through its LSTM before it becomes the log-variance.
template <typename T>
GaussianVals<T> posterior(BindContext<T>& ctx, Val<T> features) {
    const NetworkSpec& s = ctx.spec();
    ModelBundle<T>& b = ctx.bundle();
    const int N = features.shape()[0];
    GaussianVals<T> out;
    if (s.variant == Variant::vae) {
        const std::int64_t flat = features.numel() / N;
        Val<T> f = reshape(features, {N, static_cast<int>(flat)});
        out.mu = reshape(linear(f, ctx[b.mean_fc.w], ctx[b.mean_fc.b]), s.posterior_shape(N));
        out.logvar = reshape(linear(f, ctx[b.var_fc.w], ctx[b.var_fc.b]), s.posterior_shape(N));
        return out;
    }
    out.mu = bias_nchw(conv2d(features, ctx[b.mean_conv.kernel], 1, 0), ctx[b.mean_conv.bias]);
    Val<T> raw = bias_nchw(conv2d(features, ctx[b.var_conv.kernel], 1, 0), ctx[b.var_conv.bias]);
    out.logvar = (s.variant == Variant::crvae)
                     ? recurrent_transform(raw, s.steps, detail::bind_lstm(ctx, b.var_rnn))
                     : raw;
    return out;
}

// Latent transform ahead of the decoder: dense map (vae), identity (cvae) or
// channel recurrence (crvae). The output u is also the mutual-information
// prediction target.
template <typename T>
Val<T> generation(BindContext<T>& ctx, Val<T> z) {
    const NetworkSpec& s = ctx.spec();
    ModelBundle<T>& b = ctx.bundle();
    const Tensor<T>& zv = z.tape->value(z);
    if (zv.shape != s.posterior_shape(zv.dim(0))) {
        throw ShapeError("generation: latent shape " + shape_str(zv.shape) + " does not match " +
                         shape_str(s.posterior_shape(zv.dim(0))));
    }
    switch (s.variant) {
        case Variant::vae: {
            const int N = zv.dim(0);
            Val<T> flat = reshape(z, {N, s.latent_len()});
            return reshape(linear(flat, ctx[b.gen_fc.w], ctx[b.gen_fc.b]), s.posterior_shape(N));
        }
        case Variant::cvae:
            return z;
        case Variant::crvae:
            return recurrent_transform(z, s.steps, detail::bind_lstm(ctx, b.gen_rnn));
    }
    throw ConfigError("unknown variant enum value");
}

// Decoder over a transformed latent u.
template <typename T>
Val<T> decode_u(BindContext<T>& ctx, Val<T> u) {
    const NetworkSpec& s = ctx.spec();
    const int N = u.shape()[0];
    if (u.numel() != static_cast<std::int64_t>(N) * s.latent_len()) {
        throw ShapeError("decode: latent of length " + std::to_string(u.numel() / N) +
                         ", expected " + std::to_string(s.latent_len()));
    }
    Val<T> grid = reshape(u, {N, s.latent_c, s.latent_h, s.latent_w});
    return detail::conv_stack(ctx, grid, ctx.bundle().decoder, s.leak, false, s.out_act);
}

// Full latent-to-image map (variant transform included).
template <typename T>
Val<T> decode(BindContext<T>& ctx, Val<T> z) {
    return decode_u(ctx, generation(ctx, z));
}

template <typename T>
struct DiscOut {
    Val<T> logit;  // [N,1]
    Val<T> prob;   // logistic(logit)
};

template <typename T>
Val<T> trunk_features(BindContext<T>& ctx, Val<T> x) {
    return detail::conv_stack(ctx, x, ctx.bundle().trunk, ctx.spec().leak, true, ctx.spec().out_act);
}

// Realness score. Returns both the raw logit (for stable loss assembly) and
// the probability (for accuracy probes).
template <typename T>
DiscOut<T> discriminate(BindContext<T>& ctx, Val<T> x) {
    ModelBundle<T>& b = ctx.bundle();
    Val<T> f = trunk_features(ctx, x);
    const int N = f.shape()[0];
    Val<T> flat = reshape(f, {N, static_cast<int>(f.numel() / N)});
    Val<T> logit = linear(flat, ctx[b.disc_head.w], ctx[b.disc_head.b]);
    return {logit, logistic(logit)};
}

// Predicts the generation-transform output u from an image, through the
// shared trunk.
template <typename T>
Val<T> mi_predict(BindContext<T>& ctx, Val<T> x) {
    const NetworkSpec& s = ctx.spec();
    ModelBundle<T>& b = ctx.bundle();
    Val<T> f = trunk_features(ctx, x);
    const int N = f.shape()[0];
    if (s.variant == Variant::vae) {
        Val<T> flat = reshape(f, {N, static_cast<int>(f.numel() / N)});
        return reshape(linear(flat, ctx[b.mi_fc.w], ctx[b.mi_fc.b]), s.posterior_shape(N));
    }
    return bias_nchw(conv2d(f, ctx[b.mi_conv.kernel], 1, 0), ctx[b.mi_conv.bias]);
}

}  // namespace crvae
