// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/graph.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "sparsekit/matrix_io.hpp"

namespace sparsekit {

namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::SparseMatmul, "sparse_matmul"},
    {LayerKind::SparseConv, "sparse_conv"},
    {LayerKind::Elementwise, "elementwise"},
    {LayerKind::DenseFallback, "dense_matmul_fallback"},
};

std::string shape_str(Shape s) { return std::to_string(s.rows) + "x" + std::to_string(s.cols); }

[[noreturn]] void edge_error(const std::string& act, const Layer& l, const std::string& msg) {
  throw GraphError("edge '" + act + "' -> '" + l.id + "': " + msg);
}

void check_params(const EpilogueOp& op, Index rows, const Layer& l) {
  if (!is_unary(op.op)) throw GraphError("layer '" + l.id + "': 'add' cannot be used as an epilogue step");
  if (is_channelwise(op.op) && static_cast<Index>(op.params.size()) != rows) {
    throw GraphError("layer '" + l.id + "': " + std::string(to_string(op.op)) + " has " +
                     std::to_string(op.params.size()) + " parameters for " + std::to_string(rows) + " channels");
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (auto [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (auto [k, n] : kKindNames)
    if (n == name) return k;
  throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

std::map<std::string, Shape> LayerGraph::infer_shapes() const {
  if (input_shape.rows < 1 || input_shape.cols < 1) throw GraphError("graph input shape must be at least 1x1");
  std::map<std::string, Shape> shapes{{input, input_shape}};
  std::set<std::string> ids;
  for (const Layer& l : layers) {
    if (l.id.empty() || !ids.insert(l.id).second) throw GraphError("duplicate or empty layer id '" + l.id + "'");
    if (shapes.contains(l.output)) throw GraphError("activation '" + l.output + "' is produced twice");
    std::vector<Shape> in;
    for (const auto& a : l.inputs) {
      auto it = shapes.find(a);
      if (it == shapes.end()) edge_error(a, l, "activation is not produced by any earlier layer");
      in.push_back(it->second);
    }
    const std::size_t arity = (l.kind == LayerKind::Elementwise && l.op.op == ElementwiseOp::Add) ? 2 : 1;
    if (in.size() != arity) {
      throw GraphError("layer '" + l.id + "' takes " + std::to_string(arity) + " input(s), got " +
                       std::to_string(in.size()));
    }
    const Shape x = in[0];
    Shape out;
    switch (l.kind) {
      case LayerKind::SparseMatmul:
        if (x.rows != l.weight.cols()) {
          edge_error(l.inputs[0], l, "weight has " + std::to_string(l.weight.cols()) + " columns but input is " +
                                         shape_str(x));
        }
        out = {l.weight.rows(), x.cols};
        break;
      case LayerKind::DenseFallback:
        if (x.rows != l.dense.cols()) {
          edge_error(l.inputs[0], l, "weight has " + std::to_string(l.dense.cols()) + " columns but input is " +
                                         shape_str(x));
        }
        out = {static_cast<Index>(l.dense.rows()), x.cols};
        break;
      case LayerKind::SparseConv: {
        try {
          validate_conv_spec(l.conv);
        } catch (const ConfigError& e) {
          throw GraphError("layer '" + l.id + "': " + e.what());
        }
        if (x.rows != l.conv.in_channels || x.cols != l.conv.in_pixels()) {
          edge_error(l.inputs[0], l, "conv expects " + std::to_string(l.conv.in_channels) + "x" +
                                         std::to_string(l.conv.in_pixels()) + ", input is " + shape_str(x));
        }
        if (l.weight.rows() != l.conv.out_channels || l.weight.cols() != l.conv.reduction()) {
          throw GraphError("layer '" + l.id + "': filter matrix does not match conv spec");
        }
        out = {l.conv.out_channels, l.conv.out_pixels()};
        break;
      }
      case LayerKind::Elementwise:
        if (arity == 2 && in[1] != x) {
          edge_error(l.inputs[1], l, "add operands differ: " + shape_str(x) + " vs " + shape_str(in[1]));
        }
        if (arity == 1) check_params(l.op, x.rows, l);
        out = x;
        break;
    }
    for (const auto& step : l.epilogue) check_params(step, out.rows, l);
    shapes[l.output] = out;
  }
  if (!shapes.contains(output)) throw GraphError("graph output '" + output + "' is never produced");
  return shapes;
}

int LayerGraph::use_count(const std::string& activation) const {
  return static_cast<int>(consumers(activation).size()) + (activation == output ? 1 : 0);
}

std::vector<std::size_t> LayerGraph::consumers(const std::string& activation) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    for (const auto& a : layers[i].inputs)
      if (a == activation) {
        out.push_back(i);
        break;
      }
  return out;
}

std::optional<std::size_t> LayerGraph::producer(const std::string& activation) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].output == activation) return i;
  return std::nullopt;
}

// Reference interpreter.

namespace {

// Magnitude mode evaluates the network on |x|, |W| and |params|. Every op
// then bounds |op(z)| by a monotone function of |z|, so the result bounds the
// size of each exact term the output is built from.
template <typename S>
S apply_op(const EpilogueOp& op, Index row, S x, bool magnitude) {
  if (magnitude) {
    switch (op.op) {
      case ElementwiseOp::BiasAdd: return x + std::abs(static_cast<S>(op.params[static_cast<std::size_t>(row)]));
      case ElementwiseOp::Scale: return x * std::abs(static_cast<S>(op.params[static_cast<std::size_t>(row)]));
      default: return x;
    }
  }
  if constexpr (std::is_same_v<S, float>) {
    return op.apply(row, x);
  } else {
    switch (op.op) {
      case ElementwiseOp::BiasAdd: return x + static_cast<S>(op.params[static_cast<std::size_t>(row)]);
      case ElementwiseOp::Scale: return x * static_cast<S>(op.params[static_cast<std::size_t>(row)]);
      case ElementwiseOp::Relu: return x > 0 ? x : S(0);
      case ElementwiseOp::Gelu: return S(0.5) * x * (S(1) + std::erf(x / std::sqrt(S(2))));
      case ElementwiseOp::Add: break;
    }
    return x;
  }
}

template <typename S>
void apply_step(const EpilogueOp& op, DenseT<S>& x, bool magnitude) {
  for (Index r = 0; r < x.rows(); ++r)
    for (Index c = 0; c < x.cols(); ++c) x(r, c) = apply_op<S>(op, r, x(r, c), magnitude);
}

template <typename S>
DenseT<S> im2col(const ConvSpec& s, const DenseT<S>& x) {
  const VirtualOperandPlan plan(s);
  DenseT<S> cols(s.reduction(), s.out_pixels());
  for (Index k = 0; k < s.reduction(); ++k)
    for (Index p = 0; p < s.out_pixels(); ++p) {
      const auto off = plan.offset(k, p);
      cols(k, p) = off == VirtualOperandPlan::kPadding ? S(0) : x.data()[off];
    }
  return cols;
}

template <typename S>
DenseT<S> sparse_product(const CsrMatrix& w, const DenseT<S>& x, bool magnitude) {
  if constexpr (std::is_same_v<S, float>) {
    return csr_spmm(w, x);
  } else {
    const DenseT<S> dw = csr_to_dense(w).template cast<S>();
    return magnitude ? DenseT<S>(dw.cwiseAbs() * x) : DenseT<S>(dw * x);
  }
}

template <typename S>
DenseMatrix interpret(const LayerGraph& g, const DenseMatrix& input, bool magnitude = false) {
  g.validate();
  if (input.rows() != g.input_shape.rows || input.cols() != g.input_shape.cols) {
    throw DimensionError("graph input must be " + shape_str(g.input_shape));
  }
  std::map<std::string, DenseT<S>> acts;
  acts[g.input] = magnitude ? DenseT<S>(input.cwiseAbs().template cast<S>()) : input.template cast<S>();
  for (const Layer& l : g.layers) {
    const DenseT<S>& x = acts.at(l.inputs[0]);
    DenseT<S> y;
    switch (l.kind) {
      case LayerKind::SparseMatmul: y = sparse_product<S>(l.weight, x, magnitude); break;
      case LayerKind::SparseConv: y = sparse_product<S>(l.weight, im2col<S>(l.conv, x), magnitude); break;
      case LayerKind::DenseFallback:
        if constexpr (std::is_same_v<S, float>) {
          dense_matmul_f32(l.dense, x, y);
        } else {
          y = magnitude ? DenseT<S>(l.dense.cwiseAbs().cast<S>() * x) : DenseT<S>(l.dense.cast<S>() * x);
        }
        break;
      case LayerKind::Elementwise:
        if (l.op.op == ElementwiseOp::Add) {
          y = x + acts.at(l.inputs[1]);
        } else {
          y = x;
          apply_step<S>(l.op, y, magnitude);
        }
        break;
    }
    for (const auto& step : l.epilogue) apply_step<S>(step, y, magnitude);
    acts[l.output] = std::move(y);
  }
  return acts.at(g.output).template cast<float>();
}

}  // namespace

DenseMatrix run_reference(const LayerGraph& g, const DenseMatrix& input, Accumulation acc) {
  return acc == Accumulation::Float32 ? interpret<float>(g, input) : interpret<double>(g, input);
}

OracleProduct run_oracle(const LayerGraph& g, const DenseMatrix& input) {
  return {interpret<double>(g, input), interpret<double>(g, input, true)};
}

Comparison compare_to_oracle(const LayerGraph& g, const DenseMatrix& input, const DenseMatrix& actual,
                             Tolerance tol) {
  const OracleProduct o = run_oracle(g, input);
  return compare_scaled(actual, o.value, o.magnitude, tol);
}

// Graph files.

namespace {

using nlohmann::json;

json epilogue_json(const EpilogueOp& op) {
  json j{{"op", to_string(op.op)}};
  if (!op.params.empty()) j["params"] = op.params;
  return j;
}

EpilogueOp epilogue_from_json(const json& j) {
  EpilogueOp op;
  op.op = parse_elementwise_op(j.at("op").get<std::string>());
  if (j.contains("params")) op.params = j.at("params").get<std::vector<float>>();
  return op;
}

}  // namespace

std::filesystem::path save_graph(const LayerGraph& g, const std::filesystem::path& dir, const std::string& stem) {
  g.validate();
  std::filesystem::create_directories(dir);
  const auto shapes = g.infer_shapes();
  json layers = json::array();
  for (const Layer& l : g.layers) {
    json j{{"id", l.id}, {"kind", to_string(l.kind)}, {"inputs", l.inputs}, {"output", l.output}};
    const Shape s = shapes.at(l.output);
    j["shape"] = {s.rows, s.cols};
    const std::string file = stem + "." + l.id;
    switch (l.kind) {
      case LayerKind::SparseMatmul:
        write_matrix_file(l.weight, dir / (file + ".mtx"));
        j["weights"] = file + ".mtx";
        break;
      case LayerKind::DenseFallback:
        write_matrix_file(csr_from_dense(l.dense), dir / (file + ".mtx"));
        j["weights"] = file + ".mtx";
        break;
      case LayerKind::SparseConv:
        write_filters_file(unflatten_filters(l.weight, l.conv.in_channels, l.conv.filter_h, l.conv.filter_w),
                           dir / (file + ".conv"));
        j["weights"] = file + ".conv";
        j["conv"] = {{"image", {l.conv.image_h, l.conv.image_w}}, {"pad", l.conv.pad}, {"stride", l.conv.stride}};
        break;
      case LayerKind::Elementwise: {
        json op = epilogue_json(l.op);
        j["op"] = op["op"];
        if (op.contains("params")) j["params"] = op["params"];
        break;
      }
    }
    if (!l.epilogue.empty()) {
      j["epilogue"] = json::array();
      for (const auto& step : l.epilogue) j["epilogue"].push_back(epilogue_json(step));
    }
    layers.push_back(std::move(j));
  }
  const json doc{{"format", "sparsekit-graph"},
                 {"version", 1},
                 {"input", {{"name", g.input}, {"shape", {g.input_shape.rows, g.input_shape.cols}}}},
                 {"output", g.output},
                 {"layers", std::move(layers)}};
  const auto path = dir / (stem + ".json");
  std::ofstream out(path);
  if (!out) throw FileError("cannot write graph file " + path.string());
  out << doc.dump(2) << '\n';
  return path;
}

LayerGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open graph file " + path.string());
  const auto base = path.parent_path();
  LayerGraph g;
  try {
    const json doc = json::parse(in);
    if (doc.value("format", "") != "sparsekit-graph") throw FormatError("missing \"format\": \"sparsekit-graph\"");
    if (doc.value("version", 0) != 1) throw FormatError("unsupported graph version");
    g.input = doc.at("input").at("name").get<std::string>();
    const auto shape = doc.at("input").at("shape").get<std::vector<Index>>();
    if (shape.size() != 2) throw FormatError("input shape needs 2 dims");
    g.input_shape = {shape[0], shape[1]};
    g.output = doc.at("output").get<std::string>();
    for (const json& j : doc.at("layers")) {
      Layer l;
      l.id = j.at("id").get<std::string>();
      l.kind = parse_layer_kind(j.at("kind").get<std::string>());
      l.inputs = j.at("inputs").get<std::vector<std::string>>();
      l.output = j.at("output").get<std::string>();
      switch (l.kind) {
        case LayerKind::SparseMatmul:
          l.weight = read_matrix_file(base / j.at("weights").get<std::string>());
          break;
        case LayerKind::DenseFallback:
          l.dense = csr_to_dense(read_matrix_file(base / j.at("weights").get<std::string>()));
          break;
        case LayerKind::SparseConv: {
          const FilterBank f = read_filters_file(base / j.at("weights").get<std::string>());
          const json& c = j.at("conv");
          const auto image = c.at("image").get<std::vector<Index>>();
          if (image.size() != 2) throw FormatError("conv image needs 2 dims");
          l.conv = {f.in_channels(), f.out_channels(), f.filter_h(), f.filter_w(), image[0], image[1],
                    c.value("pad", Index{0}), c.value("stride", Index{1})};
          l.weight = flatten_filters(f);
          break;
        }
        case LayerKind::Elementwise:
          l.op = epilogue_from_json(j);
          break;
      }
      if (j.contains("epilogue"))
        for (const json& step : j.at("epilogue")) l.epilogue.push_back(epilogue_from_json(step));
      g.layers.push_back(std::move(l));
    }
    const auto shapes = g.infer_shapes();
    for (const json& j : doc.at("layers")) {
      if (!j.contains("shape")) continue;
      const auto s = j.at("shape").get<std::vector<Index>>();
      const Shape actual = shapes.at(j.at("output").get<std::string>());
      if (s.size() != 2 || Shape{s[0], s[1]} != actual) {
        throw GraphError("layer '" + j.at("id").get<std::string>() + "': shape annotation disagrees with inferred " +
                         shape_str(actual));
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return g;
}

LayerGraph make_mlp(const MlpOptions& o) {
  if (o.layers < 1) throw ConfigError("mlp needs at least one layer");
  LayerGraph g;
  g.input = "x";
  g.input_shape = {o.width, o.batch};
  std::string prev = g.input;
  auto add = [&](Layer l) {
    prev = l.output;
    g.layers.push_back(std::move(l));
  };
  for (int i = 1; i <= o.layers; ++i) {
    const std::string n = std::to_string(i);
    Layer fc;
    fc.id = fc.output = "fc" + n;
    fc.kind = LayerKind::SparseMatmul;
    fc.inputs = {prev};
    fc.weight = generate_synthetic(o.width, o.width, o.sparsity, o.seed * 1000 + static_cast<std::uint64_t>(i));
    add(std::move(fc));
    if (o.bias) {
      const DenseMatrix b = random_dense(o.width, 1, o.seed * 1000 + 500 + static_cast<std::uint64_t>(i));
      Layer bias;
      bias.id = bias.output = "bias" + n;
      bias.kind = LayerKind::Elementwise;
      bias.inputs = {prev};
      bias.op = {ElementwiseOp::BiasAdd, std::vector<float>(b.data(), b.data() + b.size())};
      add(std::move(bias));
    }
    if (o.relu && i < o.layers) {
      Layer relu;
      relu.id = relu.output = "relu" + n;
      relu.kind = LayerKind::Elementwise;
      relu.inputs = {prev};
      relu.op = {ElementwiseOp::Relu, {}};
      add(std::move(relu));
    }
  }
  g.output = prev;
  return g;
}

}  // namespace sparsekit
