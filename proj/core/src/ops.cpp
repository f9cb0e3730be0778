#include "ltx/ops.hpp"

#include "kernels.hpp"
#include "ltx/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace ltx::ops {

namespace {

void require_same_tape(Var a, Var b, const char* op)
{
    if (a.tape == nullptr || a.tape != b.tape) {
        throw ContractError(std::string(op) + ": operands live on different tapes");
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op)
{
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.dims()));
    }
}

// Splits [C,H,W] / [B,C,H,W] into (batch, channels, height, width).
struct ImageDims {
    std::size_t batch, channels, height, width;
    bool batched;
};

ImageDims image_dims(const Tensor& t, const char* op)
{
    if (t.rank() == 3) {
        return {1, t.dim(0), t.dim(1), t.dim(2), false};
    }
    if (t.rank() == 4) {
        return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
    }
    throw ShapeError(std::string(op) + ": expected [C,H,W] or [B,C,H,W], got " + shape_string(t.dims()));
}

Shape image_shape(const ImageDims& d, std::size_t c, std::size_t h, std::size_t w)
{
    if (d.batched) {
        return {d.batch, c, h, w};
    }
    return {c, h, w};
}

double stable_sigmoid(double x)
{
    double y;
    if (x >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        y = e / (1.0 + e);
    }
    // Keep the open interval even where the exponential saturates.
    return std::clamp(y, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

}  // namespace

Var ewise(Ewise kind, Var a, Var b)
{
    require_same_tape(a, b, "ewise");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool broadcast = bv.is_scalar() && av.dims() != bv.dims();
    if (!broadcast && av.dims() != bv.dims()) {
        throw ShapeError("ewise: shape mismatch " + shape_string(av.dims()) + " vs " + shape_string(bv.dims()));
    }
    Tensor out(av.dims());
    const std::size_t n = av.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double rhs = broadcast ? bv[0] : bv[i];
        switch (kind) {
        case Ewise::add: out[i] = av[i] + rhs; break;
        case Ewise::sub: out[i] = av[i] - rhs; break;
        case Ewise::mul: out[i] = av[i] * rhs; break;
        }
    }
    const std::size_t ia = a.id;
    const std::size_t ib = b.id;
    return a.tape->push(std::move(out), a.requires_grad() || b.requires_grad(),
                        [ia, ib, kind, broadcast](Tape& tape, std::size_t self) {
                            const Tensor& g = tape.output_grad(self);
                            const std::size_t n = g.size();
                            if (tape.requires_grad(ia)) {
                                Tensor& ga = tape.grad_buffer(ia);
                                const Tensor& bv = tape.value(ib);
                                for (std::size_t i = 0; i < n; ++i) {
                                    if (kind == Ewise::mul) {
                                        ga[i] += g[i] * (broadcast ? bv[0] : bv[i]);
                                    } else {
                                        ga[i] += g[i];
                                    }
                                }
                            }
                            if (tape.requires_grad(ib)) {
                                Tensor& gb = tape.grad_buffer(ib);
                                const Tensor& av = tape.value(ia);
                                for (std::size_t i = 0; i < n; ++i) {
                                    double d = g[i];
                                    if (kind == Ewise::sub) {
                                        d = -d;
                                    } else if (kind == Ewise::mul) {
                                        d *= av[i];
                                    }
                                    gb[broadcast ? 0 : i] += d;
                                }
                            }
                        });
}

Var scale(Var x, double factor)
{
    Tensor out = x.value();
    for (double& v : out.values()) {
        v *= factor;
    }
    const std::size_t ix = x.id;
    return x.tape->push(std::move(out), x.requires_grad(), [ix, factor](Tape& tape, std::size_t self) {
        const Tensor& g = tape.output_grad(self);
        Tensor& gx = tape.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += g[i] * factor;
        }
    });
}

Var matmul(Var a, Var b)
{
    require_same_tape(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank(av, 2, "matmul");
    require_rank(bv, 2, "matmul");
    const std::size_t r = av.dim(0);
    const std::size_t k = av.dim(1);
    const std::size_t c = bv.dim(1);
    if (bv.dim(0) != k) {
        throw ShapeError("matmul: inner dims disagree " + shape_string(av.dims()) + " * " + shape_string(bv.dims()));
    }
    Tensor out({r, c});
    kernels::gemm(false, false, r, c, k, av.ptr(), bv.ptr(), out.ptr(), false);
    const std::size_t ia = a.id;
    const std::size_t ib = b.id;
    return a.tape->push(std::move(out), a.requires_grad() || b.requires_grad(),
                        [ia, ib, r, k, c](Tape& tape, std::size_t self) {
                            const Tensor& g = tape.output_grad(self);
                            if (tape.requires_grad(ia)) {
                                kernels::gemm(false, true, r, k, c, g.ptr(), tape.value(ib).ptr(),
                                              tape.grad_buffer(ia).ptr(), true);
                            }
                            if (tape.requires_grad(ib)) {
                                kernels::gemm(true, false, k, c, r, tape.value(ia).ptr(), g.ptr(),
                                              tape.grad_buffer(ib).ptr(), true);
                            }
                        });
}

Var add_bias(Var x, Var bias)
{
    require_same_tape(x, bias, "add_bias");
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    require_rank(xv, 2, "add_bias");
    const std::size_t rows = xv.dim(0);
    const std::size_t cols = xv.dim(1);
    if (bv.size() != cols) {
        throw ShapeError("add_bias: bias " + shape_string(bv.dims()) + " does not match " + shape_string(xv.dims()));
    }
    Tensor out = xv;
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = out.ptr() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            row[c] += bv[c];
        }
    }
    const std::size_t ix = x.id;
    const std::size_t ib = bias.id;
    return x.tape->push(std::move(out), x.requires_grad() || bias.requires_grad(),
                        [ix, ib, rows, cols](Tape& tape, std::size_t self) {
                            const Tensor& g = tape.output_grad(self);
                            if (tape.requires_grad(ix)) {
                                Tensor& gx = tape.grad_buffer(ix);
                                for (std::size_t i = 0; i < g.size(); ++i) {
                                    gx[i] += g[i];
                                }
                            }
                            if (tape.requires_grad(ib)) {
                                Tensor& gb = tape.grad_buffer(ib);
                                for (std::size_t r = 0; r < rows; ++r) {
                                    const double* row = g.ptr() + r * cols;
                                    for (std::size_t c = 0; c < cols; ++c) {
                                        gb[c] += row[c];
                                    }
                                }
                            }
                        });
}

namespace {

// cols[(c*kh + i)*kw + j][y*out_w + x] = image[c][y+i][x+j]
void im2col(const double* image, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, double* cols)
{
    const std::size_t oh = h - kh + 1;
    const std::size_t ow = w - kw + 1;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j) {
                double* dst = cols + ((c * kh + i) * kw + j) * oh * ow;
                for (std::size_t y = 0; y < oh; ++y) {
                    const double* src = image + (c * h + y + i) * w + j;
                    std::copy(src, src + ow, dst + y * ow);
                }
            }
        }
    }
}

void col2im_add(const double* cols, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, double* image)
{
    const std::size_t oh = h - kh + 1;
    const std::size_t ow = w - kw + 1;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j) {
                const double* src = cols + ((c * kh + i) * kw + j) * oh * ow;
                for (std::size_t y = 0; y < oh; ++y) {
                    double* dst = image + (c * h + y + i) * w + j;
                    for (std::size_t x = 0; x < ow; ++x) {
                        dst[x] += src[y * ow + x];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(Var input, Var kernels, Var bias)
{
    require_same_tape(input, kernels, "conv2d");
    require_same_tape(input, bias, "conv2d");
    const Tensor& iv = input.value();
    const Tensor& kv = kernels.value();
    const ImageDims d = image_dims(iv, "conv2d");
    require_rank(kv, 4, "conv2d");
    const std::size_t out_c = kv.dim(0);
    const std::size_t kh = kv.dim(2);
    const std::size_t kw = kv.dim(3);
    if (kv.dim(1) != d.channels) {
        throw ShapeError("conv2d: kernel input channels " + std::to_string(kv.dim(1)) + " vs image channels " +
                         std::to_string(d.channels));
    }
    if (kh > d.height || kw > d.width) {
        throw ShapeError("conv2d: kernel " + shape_string(kv.dims()) + " larger than input " + shape_string(iv.dims()));
    }
    if (bias.value().size() != out_c) {
        throw ShapeError("conv2d: bias must have " + std::to_string(out_c) + " entries");
    }
    const std::size_t oh = d.height - kh + 1;
    const std::size_t ow = d.width - kw + 1;
    const std::size_t patch = d.channels * kh * kw;
    const std::size_t in_stride = d.channels * d.height * d.width;
    const std::size_t out_stride = out_c * oh * ow;

    Tensor out(image_shape(d, out_c, oh, ow));
    std::vector<double> cols(patch * oh * ow);
    const Tensor& bv = bias.value();
    for (std::size_t b = 0; b < d.batch; ++b) {
        im2col(iv.ptr() + b * in_stride, d.channels, d.height, d.width, kh, kw, cols.data());
        double* dst = out.ptr() + b * out_stride;
        for (std::size_t o = 0; o < out_c; ++o) {
            std::fill(dst + o * oh * ow, dst + (o + 1) * oh * ow, bv[o]);
        }
        kernels::gemm(false, false, out_c, oh * ow, patch, kv.ptr(), cols.data(), dst, true);
    }

    const std::size_t ii = input.id;
    const std::size_t ik = kernels.id;
    const std::size_t ib = bias.id;
    return input.tape->push(
        std::move(out), input.requires_grad() || kernels.requires_grad() || bias.requires_grad(),
        [ii, ik, ib, d, out_c, kh, kw, oh, ow, patch, in_stride, out_stride](Tape& tape, std::size_t self) {
            const Tensor& g = tape.output_grad(self);
            const bool need_input = tape.requires_grad(ii);
            const bool need_kernels = tape.requires_grad(ik);
            std::vector<double> cols(patch * oh * ow);
            for (std::size_t b = 0; b < d.batch; ++b) {
                const double* gb = g.ptr() + b * out_stride;
                if (need_kernels) {
                    im2col(tape.value(ii).ptr() + b * in_stride, d.channels, d.height, d.width, kh, kw, cols.data());
                    kernels::gemm(false, true, out_c, patch, oh * ow, gb, cols.data(), tape.grad_buffer(ik).ptr(),
                                  true);
                }
                if (need_input) {
                    kernels::gemm(true, false, patch, oh * ow, out_c, tape.value(ik).ptr(), gb, cols.data(), false);
                    col2im_add(cols.data(), d.channels, d.height, d.width, kh, kw,
                               tape.grad_buffer(ii).ptr() + b * in_stride);
                }
            }
            if (tape.requires_grad(ib)) {
                Tensor& gbias = tape.grad_buffer(ib);
                for (std::size_t b = 0; b < d.batch; ++b) {
                    for (std::size_t o = 0; o < out_c; ++o) {
                        const double* src = g.ptr() + b * out_stride + o * oh * ow;
                        double acc = 0.0;
                        for (std::size_t p = 0; p < oh * ow; ++p) {
                            acc += src[p];
                        }
                        gbias[o] += acc;
                    }
                }
            }
        });
}

Var maxpool2(Var input)
{
    const Tensor& iv = input.value();
    const ImageDims d = image_dims(iv, "maxpool2");
    if (d.height % 2 != 0 || d.width % 2 != 0) {
        throw ShapeError("maxpool2: spatial dims must be even, got " + shape_string(iv.dims()));
    }
    const std::size_t oh = d.height / 2;
    const std::size_t ow = d.width / 2;
    const std::size_t planes = d.batch * d.channels;
    Tensor out(image_shape(d, d.channels, oh, ow));
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = iv.ptr() + p * d.height * d.width;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                // Row-major window scan; strict '>' keeps the first maximum.
                const std::size_t cells[4] = {(2 * y) * d.width + 2 * x, (2 * y) * d.width + 2 * x + 1,
                                              (2 * y + 1) * d.width + 2 * x, (2 * y + 1) * d.width + 2 * x + 1};
                std::size_t best = cells[0];
                for (std::size_t c = 1; c < 4; ++c) {
                    if (src[cells[c]] > src[best]) {
                        best = cells[c];
                    }
                }
                const std::size_t o = (p * oh + y) * ow + x;
                out[o] = src[best];
                (*argmax)[o] = p * d.height * d.width + best;
            }
        }
    }
    const std::size_t ii = input.id;
    return input.tape->push(std::move(out), input.requires_grad(), [ii, argmax](Tape& tape, std::size_t self) {
        const Tensor& g = tape.output_grad(self);
        Tensor& gi = tape.grad_buffer(ii);
        for (std::size_t o = 0; o < g.size(); ++o) {
            gi[(*argmax)[o]] += g[o];
        }
    });
}

Var activation(Activation kind, Var x)
{
    Tensor out = x.value();
    for (double& v : out.values()) {
        switch (kind) {
        case Activation::relu: v = v > 0.0 ? v : 0.0; break;
        case Activation::tanh: v = std::tanh(v); break;
        case Activation::sigmoid: v = stable_sigmoid(v); break;
        }
    }
    const std::size_t ix = x.id;
    return x.tape->push(std::move(out), x.requires_grad(), [ix, kind](Tape& tape, std::size_t self) {
        const Tensor& g = tape.output_grad(self);
        const Tensor& y = tape.value(self);
        const Tensor& xv = tape.value(ix);
        Tensor& gx = tape.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) {
            switch (kind) {
            case Activation::relu: gx[i] += xv[i] > 0.0 ? g[i] : 0.0; break;
            case Activation::tanh: gx[i] += g[i] * (1.0 - y[i] * y[i]); break;
            case Activation::sigmoid: gx[i] += g[i] * y[i] * (1.0 - y[i]); break;
            }
        }
    });
}

Var softmax_rows(Var logits)
{
    const Tensor& lv = logits.value();
    require_rank(lv, 2, "softmax_rows");
    const std::size_t rows = lv.dim(0);
    const std::size_t cols = lv.dim(1);
    Tensor out(lv.dims());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = lv.ptr() + r * cols;
        double* dst = out.ptr() + r * cols;
        const double hi = *std::max_element(src, src + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            dst[c] = std::exp(src[c] - hi);
            total += dst[c];
        }
        for (std::size_t c = 0; c < cols; ++c) {
            dst[c] /= total;
        }
    }
    const std::size_t il = logits.id;
    return logits.tape->push(std::move(out), logits.requires_grad(), [il, rows, cols](Tape& tape, std::size_t self) {
        const Tensor& g = tape.output_grad(self);
        const Tensor& y = tape.value(self);
        Tensor& gl = tape.grad_buffer(il);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.ptr() + r * cols;
            const double* yr = y.ptr() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                dot += gr[c] * yr[c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
                gl[r * cols + c] += yr[c] * (gr[c] - dot);
            }
        }
    });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps)
{
    require_same_tape(x, gamma, "layer_norm_rows");
    require_same_tape(x, beta, "layer_norm_rows");
    const Tensor& xv = x.value();
    require_rank(xv, 2, "layer_norm_rows");
    const std::size_t rows = xv.dim(0);
    const std::size_t cols = xv.dim(1);
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    if (gv.size() != cols || bv.size() != cols) {
        throw ShapeError("layer_norm_rows: gamma/beta must have " + std::to_string(cols) + " entries");
    }
    auto normalized = std::make_shared<std::vector<double>>(rows * cols);
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    Tensor out(xv.dims());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = xv.ptr() + r * cols;
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            mu += src[c];
        }
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            var += (src[c] - mu) * (src[c] - mu);
        }
        var /= static_cast<double>(cols);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t c = 0; c < cols; ++c) {
            const double h = (src[c] - mu) * is;
            (*normalized)[r * cols + c] = h;
            out[r * cols + c] = h * gv[c] + bv[c];
        }
    }
    const std::size_t ix = x.id;
    const std::size_t ig = gamma.id;
    const std::size_t ib = beta.id;
    return x.tape->push(
        std::move(out), x.requires_grad() || gamma.requires_grad() || beta.requires_grad(),
        [ix, ig, ib, rows, cols, normalized, inv_std](Tape& tape, std::size_t self) {
            const Tensor& g = tape.output_grad(self);
            const Tensor& gv = tape.value(ig);
            if (tape.requires_grad(ig)) {
                Tensor& gg = tape.grad_buffer(ig);
                for (std::size_t i = 0; i < rows * cols; ++i) {
                    gg[i % cols] += g[i] * (*normalized)[i];
                }
            }
            if (tape.requires_grad(ib)) {
                Tensor& gb = tape.grad_buffer(ib);
                for (std::size_t i = 0; i < rows * cols; ++i) {
                    gb[i % cols] += g[i];
                }
            }
            if (tape.requires_grad(ix)) {
                Tensor& gx = tape.grad_buffer(ix);
                const double inv_n = 1.0 / static_cast<double>(cols);
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_d = 0.0;
                    double mean_dh = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) {
                        const double dh = g[r * cols + c] * gv[c];
                        mean_d += dh;
                        mean_dh += dh * (*normalized)[r * cols + c];
                    }
                    mean_d *= inv_n;
                    mean_dh *= inv_n;
                    for (std::size_t c = 0; c < cols; ++c) {
                        const double dh = g[r * cols + c] * gv[c];
                        gx[r * cols + c] +=
                            (*inv_std)[r] * (dh - mean_d - (*normalized)[r * cols + c] * mean_dh);
                    }
                }
            }
        });
}

namespace {

struct LerpAxis {
    std::vector<std::size_t> lo, hi;
    std::vector<double> t;
};

// Align-corners sample positions: output i maps to i*(in-1)/(out-1).
LerpAxis lerp_axis(std::size_t in, std::size_t out)
{
    LerpAxis axis;
    axis.lo.resize(out);
    axis.hi.resize(out);
    axis.t.resize(out);
    for (std::size_t i = 0; i < out; ++i) {
        const double src = out > 1 ? static_cast<double>(i * (in - 1)) / static_cast<double>(out - 1) : 0.0;
        std::size_t lo = static_cast<std::size_t>(std::floor(src));
        double t = src - static_cast<double>(lo);
        if (lo >= in - 1) {
            lo = in - 1;
            t = 0.0;
        }
        axis.lo[i] = lo;
        axis.hi[i] = std::min(lo + 1, in - 1);
        axis.t[i] = t;
    }
    return axis;
}

double lerp(double a, double b, double t)
{
    return std::clamp(a + t * (b - a), std::min(a, b), std::max(a, b));
}

}  // namespace

Var bilinear_upsample(Var map, std::size_t out_h, std::size_t out_w)
{
    const Tensor& mv = map.value();
    if (mv.rank() != 2 && mv.rank() != 3) {
        throw ShapeError("bilinear_upsample: expected [h,w] or [B,h,w], got " + shape_string(mv.dims()));
    }
    const bool batched = mv.rank() == 3;
    const std::size_t batch = batched ? mv.dim(0) : 1;
    const std::size_t h = mv.dims()[mv.rank() - 2];
    const std::size_t w = mv.dims()[mv.rank() - 1];
    if (out_h < h || out_w < w) {
        throw ContractError("bilinear_upsample: cannot shrink " + shape_string(mv.dims()) + " to " +
                            std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    auto rows = std::make_shared<LerpAxis>(lerp_axis(h, out_h));
    auto cols = std::make_shared<LerpAxis>(lerp_axis(w, out_w));
    Tensor out(batched ? Shape{batch, out_h, out_w} : Shape{out_h, out_w});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* src = mv.ptr() + b * h * w;
        double* dst = out.ptr() + b * out_h * out_w;
        for (std::size_t i = 0; i < out_h; ++i) {
            const double* top = src + rows->lo[i] * w;
            const double* bottom = src + rows->hi[i] * w;
            for (std::size_t j = 0; j < out_w; ++j) {
                const double tx = cols->t[j];
                const double upper = lerp(top[cols->lo[j]], top[cols->hi[j]], tx);
                const double lower = lerp(bottom[cols->lo[j]], bottom[cols->hi[j]], tx);
                dst[i * out_w + j] = lerp(upper, lower, rows->t[i]);
            }
        }
    }
    const std::size_t im = map.id;
    return map.tape->push(std::move(out), map.requires_grad(),
                          [im, rows, cols, batch, h, w, out_h, out_w](Tape& tape, std::size_t self) {
                              const Tensor& g = tape.output_grad(self);
                              Tensor& gm = tape.grad_buffer(im);
                              for (std::size_t b = 0; b < batch; ++b) {
                                  const double* gsrc = g.ptr() + b * out_h * out_w;
                                  double* gdst = gm.ptr() + b * h * w;
                                  for (std::size_t i = 0; i < out_h; ++i) {
                                      const double ty = rows->t[i];
                                      for (std::size_t j = 0; j < out_w; ++j) {
                                          const double tx = cols->t[j];
                                          const double gij = gsrc[i * out_w + j];
                                          gdst[rows->lo[i] * w + cols->lo[j]] += gij * (1.0 - ty) * (1.0 - tx);
                                          gdst[rows->lo[i] * w + cols->hi[j]] += gij * (1.0 - ty) * tx;
                                          gdst[rows->hi[i] * w + cols->lo[j]] += gij * ty * (1.0 - tx);
                                          gdst[rows->hi[i] * w + cols->hi[j]] += gij * ty * tx;
                                      }
                                  }
                              }
                          });
}

Var reshape(Var x, Shape dims)
{
    Tensor out = x.value().reshaped(std::move(dims));
    const std::size_t ix = x.id;
    return x.tape->push(std::move(out), x.requires_grad(), [ix](Tape& tape, std::size_t self) {
        const Tensor& g = tape.output_grad(self);
        Tensor& gx = tape.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += g[i];
        }
    });
}

Var sum(Var x)
{
    double total = 0.0;
    for (double v : x.value().data()) {
        total += v;
    }
    const std::size_t ix = x.id;
    return x.tape->push(Tensor::scalar(total), x.requires_grad(), [ix](Tape& tape, std::size_t self) {
        const double g = tape.output_grad(self)[0];
        Tensor& gx = tape.grad_buffer(ix);
        for (double& v : gx.values()) {
            v += g;
        }
    });
}

Var mean(Var x)
{
    return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var multi_head_attention(Var qkv, std::size_t seq_len, std::size_t heads)
{
    const Tensor& qv = qkv.value();
    require_rank(qv, 2, "multi_head_attention");
    const std::size_t rows = qv.dim(0);
    const std::size_t width = qv.dim(1);
    if (width % 3 != 0 || heads == 0 || (width / 3) % heads != 0) {
        throw ShapeError("multi_head_attention: width " + std::to_string(width) + " is not 3*d with d divisible by " +
                         std::to_string(heads));
    }
    if (seq_len == 0 || rows % seq_len != 0) {
        throw ShapeError("multi_head_attention: " + std::to_string(rows) + " rows are not a multiple of " +
                         std::to_string(seq_len));
    }
    const std::size_t d = width / 3;
    const std::size_t dh = d / heads;
    const std::size_t groups = rows / seq_len;
    const std::size_t T = seq_len;
    const double factor = 1.0 / std::sqrt(static_cast<double>(dh));

    auto probs = std::make_shared<std::vector<double>>(groups * heads * T * T);
    Tensor out({rows, d});
    for (std::size_t b = 0; b < groups; ++b) {
        const double* base = qv.ptr() + b * T * width;
        for (std::size_t h = 0; h < heads; ++h) {
            double* p = probs->data() + (b * heads + h) * T * T;
            kernels::gemm(false, true, T, T, dh, base + h * dh, width, base + d + h * dh, width, p, T, false);
            for (std::size_t r = 0; r < T; ++r) {
                double* row = p + r * T;
                double hi = -std::numeric_limits<double>::infinity();
                for (std::size_t c = 0; c < T; ++c) {
                    row[c] *= factor;
                    hi = std::max(hi, row[c]);
                }
                double total = 0.0;
                for (std::size_t c = 0; c < T; ++c) {
                    row[c] = std::exp(row[c] - hi);
                    total += row[c];
                }
                for (std::size_t c = 0; c < T; ++c) {
                    row[c] /= total;
                }
            }
            kernels::gemm(false, false, T, dh, T, p, T, base + 2 * d + h * dh, width, out.ptr() + b * T * d + h * dh,
                          d, false);
        }
    }
    const std::size_t iq = qkv.id;
    return qkv.tape->push(
        std::move(out), qkv.requires_grad(),
        [iq, probs, groups, heads, T, d, dh, width, factor](Tape& tape, std::size_t self) {
            const Tensor& g = tape.output_grad(self);
            const Tensor& qv = tape.value(iq);
            Tensor& gq = tape.grad_buffer(iq);
            std::vector<double> dp(T * T);
            for (std::size_t b = 0; b < groups; ++b) {
                const double* base = qv.ptr() + b * T * width;
                double* gbase = gq.ptr() + b * T * width;
                const double* gout = g.ptr() + b * T * d;
                for (std::size_t h = 0; h < heads; ++h) {
                    const double* p = probs->data() + (b * heads + h) * T * T;
                    // dV += P^T dO
                    kernels::gemm(true, false, T, dh, T, p, T, gout + h * dh, d, gbase + 2 * d + h * dh, width, true);
                    // dP = dO V^T
                    kernels::gemm(false, true, T, T, dh, gout + h * dh, d, base + 2 * d + h * dh, width, dp.data(), T,
                                  false);
                    for (std::size_t r = 0; r < T; ++r) {
                        double* row = dp.data() + r * T;
                        const double* prow = p + r * T;
                        double dot = 0.0;
                        for (std::size_t c = 0; c < T; ++c) {
                            dot += row[c] * prow[c];
                        }
                        for (std::size_t c = 0; c < T; ++c) {
                            row[c] = prow[c] * (row[c] - dot) * factor;
                        }
                    }
                    // dQ += dS K ; dK += dS^T Q
                    kernels::gemm(false, false, T, dh, T, dp.data(), T, base + d + h * dh, width, gbase + h * dh, width,
                                  true);
                    kernels::gemm(true, false, T, dh, T, dp.data(), T, base + h * dh, width, gbase + d + h * dh, width,
                                  true);
                }
            }
        });
}

Var patchify(Var images, std::size_t patch)
{
    const Tensor& iv = images.value();
    const ImageDims d = image_dims(iv, "patchify");
    if (patch == 0 || d.height % patch != 0 || d.width % patch != 0) {
        throw ShapeError("patchify: image " + shape_string(iv.dims()) + " not divisible into " + std::to_string(patch) +
                         "-pixel patches");
    }
    const std::size_t gh = d.height / patch;
    const std::size_t gw = d.width / patch;
    const std::size_t cols = d.channels * patch * patch;
    const std::size_t n = gh * gw;
    // index[out] = source offset within the batch
    auto index = std::make_shared<std::vector<std::size_t>>(d.batch * n * cols);
    Tensor out({d.batch * n, cols});
    std::size_t o = 0;
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t pr = 0; pr < gh; ++pr) {
            for (std::size_t pc = 0; pc < gw; ++pc) {
                for (std::size_t c = 0; c < d.channels; ++c) {
                    for (std::size_t i = 0; i < patch; ++i) {
                        for (std::size_t j = 0; j < patch; ++j) {
                            const std::size_t src =
                                ((b * d.channels + c) * d.height + pr * patch + i) * d.width + pc * patch + j;
                            (*index)[o] = src;
                            out[o++] = iv[src];
                        }
                    }
                }
            }
        }
    }
    const std::size_t ii = images.id;
    return images.tape->push(std::move(out), images.requires_grad(), [ii, index](Tape& tape, std::size_t self) {
        const Tensor& g = tape.output_grad(self);
        Tensor& gi = tape.grad_buffer(ii);
        for (std::size_t o = 0; o < g.size(); ++o) {
            gi[(*index)[o]] += g[o];
        }
    });
}

Var assemble_tokens(Var patches, Var cls, Var positions)
{
    require_same_tape(patches, cls, "assemble_tokens");
    require_same_tape(patches, positions, "assemble_tokens");
    const Tensor& pv = patches.value();
    const Tensor& cv = cls.value();
    const Tensor& posv = positions.value();
    require_rank(pv, 2, "assemble_tokens");
    const std::size_t d = pv.dim(1);
    if (cv.size() != d || posv.size() % d != 0) {
        throw ShapeError("assemble_tokens: embedding widths disagree");
    }
    const std::size_t T = posv.size() / d;
    const std::size_t n = T - 1;
    if (n == 0 || pv.dim(0) % n != 0) {
        throw ShapeError("assemble_tokens: " + std::to_string(pv.dim(0)) + " patch rows do not fit sequences of " +
                         std::to_string(n));
    }
    const std::size_t groups = pv.dim(0) / n;
    Tensor out({groups * T, d});
    for (std::size_t b = 0; b < groups; ++b) {
        double* dst = out.ptr() + b * T * d;
        for (std::size_t c = 0; c < d; ++c) {
            dst[c] = cv[c] + posv[c];
        }
        for (std::size_t t = 0; t < n; ++t) {
            const double* src = pv.ptr() + (b * n + t) * d;
            for (std::size_t c = 0; c < d; ++c) {
                dst[(t + 1) * d + c] = src[c] + posv[(t + 1) * d + c];
            }
        }
    }
    const std::size_t ip = patches.id;
    const std::size_t ic = cls.id;
    const std::size_t ipos = positions.id;
    return patches.tape->push(
        std::move(out), patches.requires_grad() || cls.requires_grad() || positions.requires_grad(),
        [ip, ic, ipos, groups, T, n, d](Tape& tape, std::size_t self) {
            const Tensor& g = tape.output_grad(self);
            if (tape.requires_grad(ip)) {
                Tensor& gp = tape.grad_buffer(ip);
                for (std::size_t b = 0; b < groups; ++b) {
                    for (std::size_t t = 0; t < n; ++t) {
                        for (std::size_t c = 0; c < d; ++c) {
                            gp[(b * n + t) * d + c] += g[(b * T + t + 1) * d + c];
                        }
                    }
                }
            }
            if (tape.requires_grad(ic)) {
                Tensor& gc = tape.grad_buffer(ic);
                for (std::size_t b = 0; b < groups; ++b) {
                    for (std::size_t c = 0; c < d; ++c) {
                        gc[c] += g[b * T * d + c];
                    }
                }
            }
            if (tape.requires_grad(ipos)) {
                Tensor& gpos = tape.grad_buffer(ipos);
                for (std::size_t b = 0; b < groups; ++b) {
                    for (std::size_t i = 0; i < T * d; ++i) {
                        gpos[i] += g[b * T * d + i];
                    }
                }
            }
        });
}

Var group_rows(Var x, std::size_t seq_len, std::size_t offset)
{
    const Tensor& xv = x.value();
    require_rank(xv, 2, "group_rows");
    if (seq_len == 0 || offset >= seq_len || xv.dim(0) % seq_len != 0) {
        throw ShapeError("group_rows: bad grouping for " + shape_string(xv.dims()));
    }
    const std::size_t groups = xv.dim(0) / seq_len;
    const std::size_t d = xv.dim(1);
    Tensor out({groups, d});
    for (std::size_t b = 0; b < groups; ++b) {
        std::copy_n(xv.ptr() + (b * seq_len + offset) * d, d, out.ptr() + b * d);
    }
    const std::size_t ix = x.id;
    return x.tape->push(std::move(out), x.requires_grad(),
                        [ix, groups, seq_len, offset, d](Tape& tape, std::size_t self) {
                            const Tensor& g = tape.output_grad(self);
                            Tensor& gx = tape.grad_buffer(ix);
                            for (std::size_t b = 0; b < groups; ++b) {
                                for (std::size_t c = 0; c < d; ++c) {
                                    gx[(b * seq_len + offset) * d + c] += g[b * d + c];
                                }
                            }
                        });
}

Var drop_group_head(Var x, std::size_t seq_len)
{
    const Tensor& xv = x.value();
    require_rank(xv, 2, "drop_group_head");
    if (seq_len < 2 || xv.dim(0) % seq_len != 0) {
        throw ShapeError("drop_group_head: bad grouping for " + shape_string(xv.dims()));
    }
    const std::size_t groups = xv.dim(0) / seq_len;
    const std::size_t d = xv.dim(1);
    const std::size_t keep = seq_len - 1;
    Tensor out({groups * keep, d});
    for (std::size_t b = 0; b < groups; ++b) {
        std::copy_n(xv.ptr() + (b * seq_len + 1) * d, keep * d, out.ptr() + b * keep * d);
    }
    const std::size_t ix = x.id;
    return x.tape->push(std::move(out), x.requires_grad(), [ix, groups, seq_len, keep, d](Tape& tape, std::size_t self) {
        const Tensor& g = tape.output_grad(self);
        Tensor& gx = tape.grad_buffer(ix);
        for (std::size_t b = 0; b < groups; ++b) {
            for (std::size_t i = 0; i < keep * d; ++i) {
                gx[(b * seq_len + 1) * d + i] += g[b * keep * d + i];
            }
        }
    });
}

}  // namespace ltx::ops
