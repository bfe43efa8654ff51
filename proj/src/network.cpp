#include "canonprobe/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace canonprobe {

namespace {

struct Shape {
  int c, h, w;
  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
};

std::vector<Shape> stage_input_shapes(const Architecture& a) {
  std::vector<Shape> shapes{{a.input_channels, a.input_size, a.input_size}};
  for (const auto& s : a.stages) {
    const Shape& in = shapes.back();
    if (s.kind == StageKind::Conv3x3ReluMaxPool) {
      shapes.push_back({s.out, in.h / 2, in.w / 2});
    } else {
      shapes.push_back({s.out, 1, 1});
    }
  }
  return shapes;
}

const char* kind_name(StageKind k) {
  return k == StageKind::Conv3x3ReluMaxPool ? "conv3x3_relu_maxpool2" : "dense_relu";
}

StageKind kind_from_name(const std::string& n) {
  if (n == "conv3x3_relu_maxpool2") return StageKind::Conv3x3ReluMaxPool;
  if (n == "dense_relu") return StageKind::DenseRelu;
  throw std::invalid_argument("unknown stage kind: " + n);
}

}  // namespace

int Architecture::feature_dim() const { return stages.empty() ? 0 : stages.back().out; }

void Architecture::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("architecture: " + m); };
  if (input_channels != 3) fail("input must have 3 channels");
  if (input_size < 1 || resize_size < input_size) fail("need 1 <= input_size <= resize_size");
  if (stages.empty()) fail("no backbone stages");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout rate must lie in [0,1)");
  if (frozen_prefix_depth < 0 || frozen_prefix_depth > static_cast<int>(stages.size()))
    fail("frozen_prefix_depth exceeds stage count");
  for (double s : normalize_std)
    if (!(s > 0.0)) fail("normalization std must be positive");

  Shape cur{input_channels, input_size, input_size};
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (s.out < 1) fail("stage " + std::to_string(i) + " has no outputs");
    if (s.kind == StageKind::Conv3x3ReluMaxPool) {
      if (s.in != cur.c) fail("stage " + std::to_string(i) + " expects " + std::to_string(s.in) +
                              " channels, gets " + std::to_string(cur.c));
      if (cur.h < 2 || cur.w < 2) fail("stage " + std::to_string(i) + " input too small to pool");
      cur = {s.out, cur.h / 2, cur.w / 2};
    } else {
      if (static_cast<std::size_t>(s.in) != cur.size())
        fail("dense stage " + std::to_string(i) + " expects " + std::to_string(s.in) +
             " inputs, gets " + std::to_string(cur.size()));
      cur = {s.out, 1, 1};
    }
  }
  if (cur.h != 1 || cur.w != 1) fail("last stage must be dense to produce a feature vector");
}

Architecture Architecture::desk_reference() {
  Architecture a;
  a.stages = {
      {StageKind::Conv3x3ReluMaxPool, 3, 8},
      {StageKind::Conv3x3ReluMaxPool, 8, 16},
      {StageKind::Conv3x3ReluMaxPool, 16, 32},
      {StageKind::Conv3x3ReluMaxPool, 32, 32},
      {StageKind::DenseRelu, 32 * 3 * 3, 64},
  };
  return a;
}

void to_json(nlohmann::json& j, const Architecture& a) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : a.stages) stages.push_back({{"kind", kind_name(s.kind)}, {"in", s.in}, {"out", s.out}});
  j = {{"input_channels", a.input_channels},
       {"input_size", a.input_size},
       {"resize_size", a.resize_size},
       {"stages", stages},
       {"feature_dim", a.feature_dim()},
       {"num_classes", kNumOrientations},
       {"dropout_rate", a.dropout_rate},
       {"frozen_prefix_depth", a.frozen_prefix_depth},
       {"normalize_mean", a.normalize_mean},
       {"normalize_std", a.normalize_std}};
}

void from_json(const nlohmann::json& j, Architecture& a) {
  a.input_channels = j.at("input_channels").get<int>();
  a.input_size = j.at("input_size").get<int>();
  a.resize_size = j.at("resize_size").get<int>();
  a.stages.clear();
  for (const auto& s : j.at("stages"))
    a.stages.push_back({kind_from_name(s.at("kind").get<std::string>()), s.at("in").get<int>(),
                        s.at("out").get<int>()});
  a.dropout_rate = j.at("dropout_rate").get<double>();
  a.frozen_prefix_depth = j.at("frozen_prefix_depth").get<int>();
  a.normalize_mean = j.at("normalize_mean").get<Channel3>();
  a.normalize_std = j.at("normalize_std").get<Channel3>();
  if (j.contains("num_classes") && j.at("num_classes").get<int>() != kNumOrientations)
    throw std::invalid_argument("checkpoint head is not 4-way");
  if (j.contains("feature_dim") && j.at("feature_dim").get<int>() != a.feature_dim())
    throw std::invalid_argument("checkpoint feature_dim inconsistent with stages");
}

ClassifierModel::ClassifierModel(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  for (std::size_t i = 0; i < arch_.stages.size(); ++i) {
    const auto& s = arch_.stages[i];
    const std::string prefix = "backbone." + std::to_string(i) + ".";
    std::vector<int> wshape = s.kind == StageKind::Conv3x3ReluMaxPool
                                  ? std::vector<int>{s.out, s.in, 3, 3}
                                  : std::vector<int>{s.out, s.in};
    std::size_t wcount = 1;
    for (int d : wshape) wcount *= static_cast<std::size_t>(d);
    params_.push_back({prefix + "weight", wshape, std::vector<double>(wcount, 0.0)});
    params_.push_back({prefix + "bias", {s.out}, std::vector<double>(s.out, 0.0)});
  }
  const int d = arch_.feature_dim();
  params_.push_back({"head.weight", {kNumOrientations, d},
                     std::vector<double>(static_cast<std::size_t>(kNumOrientations) * d, 0.0)});
  params_.push_back({"head.bias", {kNumOrientations}, std::vector<double>(kNumOrientations, 0.0)});
}

ClassifierModel ClassifierModel::initialized(Architecture arch, std::uint64_t seed, HeadInit head) {
  ClassifierModel m(std::move(arch));
  auto rng = SeedSequence(seed).add("init").rng();
  for (std::size_t i = 0; i + 2 < m.params_.size(); i += 2) {
    auto& w = m.params_[i];
    const int fan_in = w.shape.size() == 4 ? w.shape[1] * 9 : w.shape[1];
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : w.values) v = uniform(rng, -bound, bound);
  }
  if (head == HeadInit::Random) {
    const double bound = std::sqrt(1.0 / m.arch_.feature_dim());
    for (double& v : m.params_[m.params_.size() - 2].values) v = uniform(rng, -bound, bound);
  }
  m.round_to_float();
  return m;
}

std::size_t ClassifierModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.values.size();
  return n;
}

bool ClassifierModel::is_frozen(std::size_t i) const {
  return i / 2 < static_cast<std::size_t>(arch_.frozen_prefix_depth) && i + 2 < params_.size();
}

void ClassifierModel::round_to_float() {
  for (auto& p : params_)
    for (double& v : p.values) v = static_cast<double>(static_cast<float>(v));
}

std::vector<std::vector<double>> ClassifierModel::zero_gradients() const {
  std::vector<std::vector<double>> g;
  for (const auto& p : params_) g.emplace_back(p.values.size(), 0.0);
  return g;
}

void ClassifierModel::check_input(const Tensor& input) const {
  if (input.channels != arch_.input_channels || input.height != arch_.input_size ||
      input.width != arch_.input_size) {
    throw std::invalid_argument("input tensor " + std::to_string(input.channels) + "x" +
                                std::to_string(input.height) + "x" + std::to_string(input.width) +
                                " does not match model input " + std::to_string(arch_.input_channels) +
                                "x" + std::to_string(arch_.input_size) + "x" +
                                std::to_string(arch_.input_size));
  }
}

struct ClassifierModel::Workspace {
  std::vector<Shape> shapes;               // input shape of stage i; shapes.back() = features
  std::vector<std::vector<double>> acts;   // acts[i] = input to stage i; acts.back() = features
  std::vector<std::vector<double>> conv;   // post-ReLU conv maps before pooling
  std::vector<std::vector<std::uint32_t>> argmax;
  std::vector<double> dropout_mask;
  std::vector<double> head_input;
};

namespace {

void conv3x3_forward(const double* x, const Shape& in, const double* w, const double* b, int cout,
                     double* a) {
  const int h = in.h, wd = in.w;
  const std::size_t plane = static_cast<std::size_t>(h) * wd;
  for (int co = 0; co < cout; ++co) {
    double* ap = a + co * plane;
    std::fill(ap, ap + plane, b[co]);
    for (int ci = 0; ci < in.c; ++ci) {
      const double* xp = x + ci * plane;
      const double* wk = w + (static_cast<std::size_t>(co) * in.c + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
          const double wv = wk[ky * 3 + kx];
          for (int y = y0; y < y1; ++y) {
            const double* src = xp + static_cast<std::size_t>(y + dy) * wd + dx;
            double* dst = ap + static_cast<std::size_t>(y) * wd;
            for (int xx = x0; xx < x1; ++xx) dst[xx] += wv * src[xx];
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < plane * cout; ++i) a[i] = std::max(a[i], 0.0);
}

void maxpool_forward(const double* a, int c, int h, int w, double* y, std::uint32_t* idx) {
  const int oh = h / 2, ow = w / 2;
  for (int ch = 0; ch < c; ++ch) {
    const double* ap = a + static_cast<std::size_t>(ch) * h * w;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        std::uint32_t best = static_cast<std::uint32_t>((2 * i) * w + 2 * j);
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj) {
            const auto k = static_cast<std::uint32_t>((2 * i + di) * w + 2 * j + dj);
            if (ap[k] > ap[best]) best = k;
          }
        const std::size_t o = (static_cast<std::size_t>(ch) * oh + i) * ow + j;
        y[o] = ap[best];
        idx[o] = best;
      }
    }
  }
}

// dW, db accumulate; dx (may be null) is overwritten.
void conv3x3_backward(const double* x, const Shape& in, const double* w, int cout, const double* da,
                      double* dw, double* db, double* dx) {
  const int h = in.h, wd = in.w;
  const std::size_t plane = static_cast<std::size_t>(h) * wd;
  if (dx) std::fill(dx, dx + plane * in.c, 0.0);
  for (int co = 0; co < cout; ++co) {
    const double* dap = da + co * plane;
    double bsum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) bsum += dap[i];
    db[co] += bsum;
    for (int ci = 0; ci < in.c; ++ci) {
      const double* xp = x + ci * plane;
      double* dxp = dx ? dx + ci * plane : nullptr;
      const std::size_t widx = (static_cast<std::size_t>(co) * in.c + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dxo = kx - 1;
          const int x0 = std::max(0, -dxo), x1 = std::min(wd, wd - dxo);
          const double wv = w[widx + ky * 3 + kx];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* src = xp + static_cast<std::size_t>(y + dy) * wd + dxo;
            const double* g = dap + static_cast<std::size_t>(y) * wd;
            for (int xx = x0; xx < x1; ++xx) acc += g[xx] * src[xx];
            if (dxp) {
              double* dst = dxp + static_cast<std::size_t>(y + dy) * wd + dxo;
              for (int xx = x0; xx < x1; ++xx) dst[xx] += wv * g[xx];
            }
          }
          dw[widx + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

}  // namespace

double cross_entropy(const Logits& z, int label) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s) - z[label];
}

Logits ClassifierModel::forward(const Tensor& input, Workspace& ws, Rng* dropout_rng) const {
  check_input(input);
  ws.shapes = stage_input_shapes(arch_);
  const std::size_t n_stages = arch_.stages.size();
  ws.acts.assign(n_stages + 1, {});
  ws.conv.assign(n_stages, {});
  ws.argmax.assign(n_stages, {});
  ws.acts[0].assign(input.data.begin(), input.data.end());

  for (std::size_t i = 0; i < n_stages; ++i) {
    const auto& s = arch_.stages[i];
    const Shape& in = ws.shapes[i];
    const Shape& out = ws.shapes[i + 1];
    const double* w = params_[2 * i].values.data();
    const double* b = params_[2 * i + 1].values.data();
    ws.acts[i + 1].assign(out.size(), 0.0);
    if (s.kind == StageKind::Conv3x3ReluMaxPool) {
      ws.conv[i].assign(static_cast<std::size_t>(s.out) * in.h * in.w, 0.0);
      ws.argmax[i].assign(out.size(), 0);
      conv3x3_forward(ws.acts[i].data(), in, w, b, s.out, ws.conv[i].data());
      maxpool_forward(ws.conv[i].data(), s.out, in.h, in.w, ws.acts[i + 1].data(), ws.argmax[i].data());
    } else {
      const auto& x = ws.acts[i];
      for (int o = 0; o < s.out; ++o) {
        const double* row = w + static_cast<std::size_t>(o) * s.in;
        double acc = b[o];
        for (int k = 0; k < s.in; ++k) acc += row[k] * x[k];
        ws.acts[i + 1][o] = std::max(acc, 0.0);
      }
    }
  }

  const auto& features = ws.acts.back();
  const int d = arch_.feature_dim();
  ws.head_input = features;
  ws.dropout_mask.assign(d, 1.0);
  if (dropout_rng && arch_.dropout_rate > 0.0) {
    const double keep = 1.0 - arch_.dropout_rate;
    for (int k = 0; k < d; ++k) {
      ws.dropout_mask[k] = uniform(*dropout_rng, 0.0, 1.0) < arch_.dropout_rate ? 0.0 : 1.0 / keep;
      ws.head_input[k] *= ws.dropout_mask[k];
    }
  }

  const double* hw = params_[2 * n_stages].values.data();
  const double* hb = params_[2 * n_stages + 1].values.data();
  Logits z{};
  for (int c = 0; c < kNumOrientations; ++c) {
    double acc = hb[c];
    for (int k = 0; k < d; ++k) acc += hw[c * d + k] * ws.head_input[k];
    z[c] = acc;
  }
  return z;
}

Logits ClassifierModel::logits(const Tensor& input) const {
  Workspace ws;
  return forward(input, ws, nullptr);
}

double ClassifierModel::accumulate_gradient(const Tensor& input, int label, Rng* dropout_rng,
                                            std::vector<std::vector<double>>& grads) const {
  if (label < 0 || label >= kNumOrientations) throw std::invalid_argument("label out of range");
  if (grads.size() != params_.size()) throw std::invalid_argument("gradient layout mismatch");
  Workspace ws;
  const Logits z = forward(input, ws, dropout_rng);
  const double loss = cross_entropy(z, label);

  const double m = *std::max_element(z.begin(), z.end());
  Logits dz{};
  double s = 0.0;
  for (int c = 0; c < kNumOrientations; ++c) s += (dz[c] = std::exp(z[c] - m));
  for (int c = 0; c < kNumOrientations; ++c) dz[c] /= s;
  dz[label] -= 1.0;

  const std::size_t n_stages = arch_.stages.size();
  const int d = arch_.feature_dim();
  const double* hw = params_[2 * n_stages].values.data();
  auto& g_hw = grads[2 * n_stages];
  auto& g_hb = grads[2 * n_stages + 1];
  std::vector<double> grad(d, 0.0);
  for (int c = 0; c < kNumOrientations; ++c) {
    g_hb[c] += dz[c];
    for (int k = 0; k < d; ++k) {
      g_hw[c * d + k] += dz[c] * ws.head_input[k];
      grad[k] += dz[c] * hw[c * d + k];
    }
  }
  for (int k = 0; k < d; ++k) grad[k] *= ws.dropout_mask[k];

  const auto frozen = static_cast<std::size_t>(arch_.frozen_prefix_depth);
  for (std::size_t i = n_stages; i-- > frozen;) {
    const auto& st = arch_.stages[i];
    const Shape& in = ws.shapes[i];
    const double* w = params_[2 * i].values.data();
    auto& gw = grads[2 * i];
    auto& gb = grads[2 * i + 1];
    const bool need_input_grad = i > frozen;
    std::vector<double> grad_in;

    if (st.kind == StageKind::DenseRelu) {
      const auto& x = ws.acts[i];
      const auto& y = ws.acts[i + 1];
      if (need_input_grad) grad_in.assign(st.in, 0.0);
      for (int o = 0; o < st.out; ++o) {
        if (y[o] <= 0.0 || grad[o] == 0.0) continue;
        const double g = grad[o];
        gb[o] += g;
        double* gwr = gw.data() + static_cast<std::size_t>(o) * st.in;
        const double* wr = w + static_cast<std::size_t>(o) * st.in;
        for (int k = 0; k < st.in; ++k) gwr[k] += g * x[k];
        if (need_input_grad)
          for (int k = 0; k < st.in; ++k) grad_in[k] += g * wr[k];
      }
    } else {
      // Route pooled gradient to the argmax positions; ReLU gate at those.
      std::vector<double> da(static_cast<std::size_t>(st.out) * in.h * in.w, 0.0);
      const std::size_t plane = static_cast<std::size_t>(in.h) * in.w;
      const Shape& out = ws.shapes[i + 1];
      const std::size_t oplane = static_cast<std::size_t>(out.h) * out.w;
      for (int c = 0; c < st.out; ++c) {
        for (std::size_t o = 0; o < oplane; ++o) {
          const std::size_t oi = c * oplane + o;
          const std::size_t ai = c * plane + ws.argmax[i][oi];
          if (ws.conv[i][ai] > 0.0) da[ai] += grad[oi];
        }
      }
      if (need_input_grad) grad_in.assign(in.size(), 0.0);
      conv3x3_backward(ws.acts[i].data(), in, w, st.out, da.data(), gw.data(), gb.data(),
                       need_input_grad ? grad_in.data() : nullptr);
    }
    grad = std::move(grad_in);
  }
  return loss;
}

}  // namespace canonprobe
