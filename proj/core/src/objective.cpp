#include "ltx/objective.hpp"

#include "ltx/error.hpp"
#include "ltx/ops.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace ltx::objective {

namespace {

double clamp_prob(double p)
{
    return std::clamp(p, kLogClamp, 1.0 - kLogClamp);
}

// Rows of a [k] or [B x k] tensor.
std::pair<std::size_t, std::size_t> row_layout(const Tensor& t)
{
    if (t.rank() == 1) {
        return {1, t.dim(0)};
    }
    if (t.rank() == 2) {
        return {t.dim(0), t.dim(1)};
    }
    throw ShapeError("expected [k] or [B x k], got " + shape_string(t.dims()));
}

void softmax_row(const double* logits, std::size_t k, double* out)
{
    const double hi = *std::max_element(logits, logits + k);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        out[c] = std::exp(logits[c] - hi);
        total += out[c];
    }
    for (std::size_t c = 0; c < k; ++c) {
        out[c] /= total;
    }
}

}  // namespace

std::string target_name(const TargetSpec& spec)
{
    switch (spec.mode) {
    case TargetMode::predicted_onehot: return "predicted";
    case TargetMode::distribution: return "distribution";
    case TargetMode::class_index: return "class:" + std::to_string(spec.class_index.value_or(0));
    }
    return "predicted";
}

TargetSpec parse_target(std::string_view text)
{
    if (text == "predicted") {
        return TargetSpec::predicted();
    }
    if (text == "distribution") {
        return TargetSpec::distribution();
    }
    if (text.starts_with("class:")) {
        const std::string_view digits = text.substr(6);
        std::size_t k = 0;
        const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), k);
        if (!digits.empty() && res.ec == std::errc{} && res.ptr == digits.data() + digits.size()) {
            return TargetSpec::for_class(k);
        }
    }
    throw ContractError("bad target '" + std::string(text) + "' (expected predicted, distribution or class:K)");
}

Var mask_blend(Var x, Var m, Var z)
{
    const Tensor& xv = x.value();
    const Tensor& mv = m.value();
    if (z.value().size() != 1) {
        throw ShapeError("mask_blend: z must be a scalar, got " + shape_string(z.value().dims()));
    }
    std::size_t batch = 1;
    std::size_t channels = 0;
    if (xv.rank() == 3 && mv.rank() == 2) {
        channels = xv.dim(0);
    } else if (xv.rank() == 4 && mv.rank() == 3 && xv.dim(0) == mv.dim(0)) {
        batch = xv.dim(0);
        channels = xv.dim(1);
    } else {
        throw ShapeError("mask_blend: image " + shape_string(xv.dims()) + " and map " + shape_string(mv.dims()) +
                         " are incompatible");
    }
    const std::size_t plane = mv.size() / batch;
    if (xv.size() != batch * channels * plane ||
        !std::equal(mv.dims().end() - 2, mv.dims().end(), xv.dims().end() - 2)) {
        throw ShapeError("mask_blend: map " + shape_string(mv.dims()) + " does not cover image " +
                         shape_string(xv.dims()));
    }
    const double zv = z.value()[0];
    Tensor out(xv.dims());
    for (std::size_t b = 0; b < batch; ++b) {
        const double* mp = mv.ptr() + b * plane;
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                out[base + i] = xv[base + i] * mp[i] + zv * (1.0 - mp[i]);
            }
        }
    }
    const std::size_t ix = x.id;
    const std::size_t im = m.id;
    const std::size_t iz = z.id;
    Tape* tape = x.tape;
    if (m.tape != tape || z.tape != tape) {
        throw ContractError("mask_blend: operands live on different tapes");
    }
    return tape->push(std::move(out), x.requires_grad() || m.requires_grad() || z.requires_grad(),
                      [ix, im, iz, batch, channels, plane](Tape& t, std::size_t self) {
                          const Tensor& g = t.output_grad(self);
                          const Tensor& xv = t.value(ix);
                          const Tensor& mv = t.value(im);
                          const double zv = t.value(iz)[0];
                          const bool gx = t.requires_grad(ix);
                          const bool gm = t.requires_grad(im);
                          double gz = 0.0;
                          for (std::size_t b = 0; b < batch; ++b) {
                              const double* mp = mv.ptr() + b * plane;
                              for (std::size_t c = 0; c < channels; ++c) {
                                  const std::size_t base = (b * channels + c) * plane;
                                  for (std::size_t i = 0; i < plane; ++i) {
                                      const double gi = g[base + i];
                                      if (gx) {
                                          t.grad_buffer(ix)[base + i] += gi * mp[i];
                                      }
                                      if (gm) {
                                          t.grad_buffer(im)[b * plane + i] += gi * (xv[base + i] - zv);
                                      }
                                      gz += gi * (1.0 - mp[i]);
                                  }
                              }
                          }
                          if (t.requires_grad(iz)) {
                              t.grad_buffer(iz)[0] += gz;
                          }
                      });
}

Tensor target_select(const Tensor& pred_dist, const TargetSpec& spec)
{
    const auto [rows, k] = row_layout(pred_dist);
    Tensor y(pred_dist.dims(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* p = pred_dist.ptr() + r * k;
        double* out = y.ptr() + r * k;
        switch (spec.mode) {
        case TargetMode::predicted_onehot: {
            std::size_t best = 0;
            for (std::size_t c = 1; c < k; ++c) {
                if (p[c] > p[best]) {
                    best = c;
                }
            }
            out[best] = 1.0;
            break;
        }
        case TargetMode::distribution: std::copy_n(p, k, out); break;
        case TargetMode::class_index:
            if (!spec.class_index || *spec.class_index >= k) {
                throw ContractError("target class " +
                                    (spec.class_index ? std::to_string(*spec.class_index) : std::string("<none>")) +
                                    " out of range for " + std::to_string(k) + " classes");
            }
            out[*spec.class_index] = 1.0;
            break;
        }
    }
    return y;
}

Var loss_pred(Var logits, const Tensor& y)
{
    const Tensor& lv = logits.value();
    const auto [rows, k] = row_layout(lv);
    if (y.size() != lv.size()) {
        throw ShapeError("loss_pred: target " + shape_string(y.dims()) + " vs logits " + shape_string(lv.dims()));
    }
    std::vector<double> probs(lv.size());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        softmax_row(lv.ptr() + r * k, k, probs.data() + r * k);
        for (std::size_t c = 0; c < k; ++c) {
            const double yc = y[r * k + c];
            if (yc != 0.0) {
                total -= yc * std::log(clamp_prob(probs[r * k + c]));
            }
        }
    }
    const double scale = 1.0 / static_cast<double>(rows);
    const std::size_t il = logits.id;
    return logits.tape->push(
        Tensor::scalar(total * scale), logits.requires_grad(),
        [il, y, probs = std::move(probs), rows, k, scale](Tape& tape, std::size_t self) {
            const double g = tape.output_grad(self)[0] * scale;
            Tensor& gl = tape.grad_buffer(il);
            std::vector<double> dp(k);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* p = probs.data() + r * k;
                double dot = 0.0;
                for (std::size_t c = 0; c < k; ++c) {
                    const bool inside = p[c] > kLogClamp && p[c] < 1.0 - kLogClamp;
                    dp[c] = inside ? -y[r * k + c] / p[c] : 0.0;
                    dot += dp[c] * p[c];
                }
                for (std::size_t c = 0; c < k; ++c) {
                    gl[r * k + c] += g * p[c] * (dp[c] - dot);
                }
            }
        });
}

Var loss_mask(Var m, MaskPenalty penalty)
{
    if (penalty == MaskPenalty::l1) {
        return ops::mean(m);
    }
    const Tensor& mv = m.value();
    const double scale = 1.0 / static_cast<double>(mv.size());
    double total = 0.0;
    for (double v : mv.data()) {
        total -= std::log(std::max(1.0 - v, kLogClamp));
    }
    const std::size_t im = m.id;
    return m.tape->push(Tensor::scalar(total * scale), m.requires_grad(), [im, scale](Tape& tape, std::size_t self) {
        const double g = tape.output_grad(self)[0] * scale;
        const Tensor& mv = tape.value(im);
        Tensor& gm = tape.grad_buffer(im);
        for (std::size_t i = 0; i < mv.size(); ++i) {
            const double rest = 1.0 - mv[i];
            if (rest > kLogClamp) {
                gm[i] += g / rest;
            }
        }
    });
}

Var loss_inv(Var logits_inverse, const Tensor& y)
{
    const Tensor& lv = logits_inverse.value();
    const auto [rows, k] = row_layout(lv);
    if (y.size() != lv.size()) {
        throw ShapeError("loss_inv: target " + shape_string(y.dims()) + " vs logits " + shape_string(lv.dims()));
    }
    std::vector<std::size_t> cls(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t ones = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const double v = y[r * k + c];
            if (v == 1.0) {
                cls[r] = c;
                ++ones;
            } else if (v != 0.0) {
                ones = 2;
                break;
            }
        }
        if (ones != 1) {
            throw ContractError("loss_inv: requires a one-hot target per row");
        }
    }
    std::vector<double> probs(lv.size());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        softmax_row(lv.ptr() + r * k, k, probs.data() + r * k);
        total -= std::log(1.0 - clamp_prob(probs[r * k + cls[r]]));
    }
    const double scale = 1.0 / static_cast<double>(rows);
    const std::size_t il = logits_inverse.id;
    return logits_inverse.tape->push(
        Tensor::scalar(total * scale), logits_inverse.requires_grad(),
        [il, cls = std::move(cls), probs = std::move(probs), rows, k, scale](Tape& tape, std::size_t self) {
            const double g = tape.output_grad(self)[0] * scale;
            Tensor& gl = tape.grad_buffer(il);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* p = probs.data() + r * k;
                const double py = p[cls[r]];
                if (!(py > kLogClamp && py < 1.0 - kLogClamp)) {
                    continue;
                }
                // d/dp_y of -log(1 - p_y), then through the softmax.
                const double dpy = 1.0 / (1.0 - py);
                for (std::size_t c = 0; c < k; ++c) {
                    const double jac = (c == cls[r] ? py * (1.0 - py) : -py * p[c]);
                    gl[r * k + c] += g * dpy * jac;
                }
            }
        });
}

Var loss_smooth(Var m, Smoothness kind)
{
    const Tensor& mv = m.value();
    if (mv.rank() != 2 && mv.rank() != 3) {
        throw ShapeError("loss_smooth: expected [H,W] or [B,H,W], got " + shape_string(mv.dims()));
    }
    const std::size_t batch = mv.rank() == 3 ? mv.dim(0) : 1;
    const std::size_t h = mv.dims()[mv.rank() - 2];
    const std::size_t w = mv.dims()[mv.rank() - 1];
    const double scale = 1.0 / static_cast<double>(batch);
    auto penalty = [kind](double d) { return kind == Smoothness::l1 ? std::abs(d) : d * d; };
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* p = mv.ptr() + b * h * w;
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                if (j + 1 < w) {
                    total += penalty(p[i * w + j + 1] - p[i * w + j]);
                }
                if (i + 1 < h) {
                    total += penalty(p[(i + 1) * w + j] - p[i * w + j]);
                }
            }
        }
    }
    const std::size_t im = m.id;
    return m.tape->push(Tensor::scalar(total * scale), m.requires_grad(),
                        [im, batch, h, w, scale, kind](Tape& tape, std::size_t self) {
                            const double g = tape.output_grad(self)[0] * scale;
                            const Tensor& mv = tape.value(im);
                            Tensor& gm = tape.grad_buffer(im);
                            auto slope = [kind](double d) {
                                if (kind == Smoothness::l2) {
                                    return 2.0 * d;
                                }
                                return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                            };
                            for (std::size_t b = 0; b < batch; ++b) {
                                const double* p = mv.ptr() + b * h * w;
                                double* gp = gm.ptr() + b * h * w;
                                for (std::size_t i = 0; i < h; ++i) {
                                    for (std::size_t j = 0; j < w; ++j) {
                                        if (j + 1 < w) {
                                            const double s = g * slope(p[i * w + j + 1] - p[i * w + j]);
                                            gp[i * w + j + 1] += s;
                                            gp[i * w + j] -= s;
                                        }
                                        if (i + 1 < h) {
                                            const double s = g * slope(p[(i + 1) * w + j] - p[i * w + j]);
                                            gp[(i + 1) * w + j] += s;
                                            gp[i * w + j] -= s;
                                        }
                                    }
                                }
                            }
                        });
}

LtxTerms ltx_loss(const models::ModelSpec& spec, Var images, const BoundParams& explainer,
                  const BoundParams& explained, const Tensor& targets, const LossWeights& weights)
{
    if (weights.mask < 0.0 || weights.inv < 0.0 || weights.smooth < 0.0) {
        throw ContractError("ltx_loss: loss weights must be non-negative");
    }
    LtxTerms terms;
    const Var z = explainer[models::kMaskParam];
    terms.map = models::explainer_pixel_map(spec, explainer, images);
    terms.masked = mask_blend(images, terms.map, z);
    const Var logits = models::classifier_logits(spec, explained, terms.masked);
    Var loss = loss_pred(logits, targets);
    terms.pred = loss.value().item();
    if (weights.mask != 0.0) {
        const Var term = loss_mask(terms.map, weights.mask_penalty);
        terms.mask = term.value().item();
        loss = ops::add(loss, ops::scale(term, weights.mask));
    }
    if (weights.inv != 0.0) {
        Tape& tape = *images.tape;
        const Var one = tape.constant(Tensor::scalar(1.0));
        const Var inverse = ops::sub(ops::scale(terms.map, -1.0), ops::scale(one, -1.0));
        const Var inv_logits = models::classifier_logits(spec, explained, mask_blend(images, inverse, z));
        const Var term = loss_inv(inv_logits, targets);
        terms.inv = term.value().item();
        loss = ops::add(loss, ops::scale(term, weights.inv));
    }
    if (weights.smooth != 0.0) {
        const Var term = loss_smooth(terms.map, weights.smoothness);
        terms.smooth = term.value().item();
        loss = ops::add(loss, ops::scale(term, weights.smooth));
    }
    terms.loss = loss;
    return terms;
}

}  // namespace ltx::objective
