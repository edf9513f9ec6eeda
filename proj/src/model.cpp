#include "pheno/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "pheno/error.hpp"

namespace pheno {

using nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view cell_name(CellKind c) {
  switch (c) {
    case CellKind::kLstm: return "LSTM";
    case CellKind::kGru: return "GRU";
    case CellKind::kCnnLstm: return "CNN+LSTM";
    case CellKind::kCnnGru: return "CNN+GRU";
  }
  return "LSTM";
}

CellKind parse_cell(std::string_view s) {
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  if (v == "LSTM") return CellKind::kLstm;
  if (v == "GRU") return CellKind::kGru;
  if (v == "CNN+LSTM" || v == "CNN_LSTM") return CellKind::kCnnLstm;
  if (v == "CNN+GRU" || v == "CNN_GRU") return CellKind::kCnnGru;
  throw Error(ErrorKind::kInvalidSpec, fmt::format("unknown cell '{}'", s), std::string(s));
}

void ModelSpec::validate() const {
  if (input_dim != 2 && input_dim != 7 && input_dim != 60) {
    throw Error(ErrorKind::kInvalidSpec, fmt::format("input_dim {} not in {{2, 7, 60}}", input_dim),
                "input_dim", input_dim);
  }
  if (hidden_size <= 0) {
    throw Error(ErrorKind::kInvalidSpec, "hidden_size must be positive", "hidden_size",
                hidden_size);
  }
  if (num_layers <= 0) {
    throw Error(ErrorKind::kInvalidSpec, "num_layers must be positive", "num_layers", num_layers);
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw Error(ErrorKind::kInvalidSpec, "dropout must lie in [0, 1)", "dropout", dropout);
  }
  if (has_conv() && (conv_kernel <= 0 || conv_channels < 0)) {
    throw Error(ErrorKind::kInvalidSpec, "conv kernel must be positive", "conv_kernel",
                conv_kernel);
  }
}

json model_spec_to_json(const ModelSpec& s) {
  json j{{"cell", std::string(cell_name(s.cell))},
         {"input_dim", s.input_dim},
         {"hidden_size", s.hidden_size},
         {"num_layers", s.num_layers},
         {"dropout", s.dropout}};
  if (s.has_conv()) {
    j["conv_kernel"] = s.conv_kernel;
    j["conv_channels"] = s.conv_channels;
  }
  return j;
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec s;
  try {
    s.cell = parse_cell(j.value("cell", std::string("LSTM")));
    s.input_dim = j.value("input_dim", s.input_dim);
    s.hidden_size = j.value("hidden_size", s.hidden_size);
    s.num_layers = j.value("num_layers", s.num_layers);
    s.dropout = j.value("dropout", s.dropout);
    s.conv_kernel = j.value("conv_kernel", s.conv_kernel);
    s.conv_channels = j.value("conv_channels", s.conv_channels);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidSpec, fmt::format("bad model spec: {}", e.what()));
  }
  s.validate();
  return s;
}

std::vector<TensorInfo> tensor_layout(const ModelSpec& spec) {
  std::vector<TensorInfo> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    out.push_back({std::move(name), rows, cols, offset});
    offset += static_cast<std::size_t>(rows) * cols;
  };
  const int h = spec.hidden_size;
  const int g = spec.gate_count();
  if (spec.has_conv()) {
    add("conv.weight", spec.channels(), spec.conv_kernel * spec.input_dim);
    add("conv.bias", spec.channels(), 1);
  }
  for (int l = 0; l < spec.num_layers; ++l) {
    const int in = l == 0 ? spec.recurrent_input_dim() : h;
    add(fmt::format("layer{}.weight", l), g * h, in + h);
    add(fmt::format("layer{}.bias", l), g * h, 1);
  }
  add("head.weight", 2, h);
  add("head.bias", 2, 1);
  return out;
}

std::size_t parameter_count(const ModelSpec& spec) {
  std::size_t n = 0;
  for (const auto& t : tensor_layout(spec)) n += t.size();
  return n;
}

RecurrentModel::RecurrentModel(ModelSpec spec) : spec_(spec) {
  spec_.validate();
  layout_ = tensor_layout(spec_);
  params_.assign(layout_.empty() ? 0 : layout_.back().offset + layout_.back().size(), 0.0);
}

RecurrentModel RecurrentModel::initialize(const ModelSpec& spec, std::uint64_t seed) {
  RecurrentModel m(spec);
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec.hidden_size));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& p : m.params_) p = dist(rng);
  return m;
}

Eigen::Map<const MatrixXd> RecurrentModel::tensor(std::size_t index) const {
  const TensorInfo& t = layout_.at(index);
  return {params_.data() + t.offset, t.rows, t.cols};
}

Eigen::Map<MatrixXd> RecurrentModel::tensor(std::size_t index) {
  const TensorInfo& t = layout_.at(index);
  return {params_.data() + t.offset, t.rows, t.cols};
}

namespace {

struct TensorIndex {
  std::size_t conv_weight = 0;
  std::size_t conv_bias = 0;
  std::size_t first_layer = 0;
  std::size_t head_weight = 0;
  std::size_t head_bias = 0;

  explicit TensorIndex(const ModelSpec& spec) {
    first_layer = spec.has_conv() ? 2 : 0;
    conv_bias = 1;
    head_weight = first_layer + 2 * static_cast<std::size_t>(spec.num_layers);
    head_bias = head_weight + 1;
  }
  std::size_t layer_weight(int l) const { return first_layer + 2 * static_cast<std::size_t>(l); }
  std::size_t layer_bias(int l) const { return layer_weight(l) + 1; }
};

inline MatrixXd sigmoid(const MatrixXd& z) {
  return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

// Copies the previous-state column for every sequence that has already ended.
void hold_finished(MatrixXd& next, const MatrixXd& prev, const std::vector<int>& finished) {
  for (int b : finished) next.col(b) = prev.col(b);
}

void zero_columns(MatrixXd& m, const std::vector<int>& finished) {
  for (int b : finished) m.col(b).setZero();
}

}  // namespace

BatchOutput forward_batch(const RecurrentModel& model, std::span<const Sequence* const> batch,
                          bool training, std::mt19937_64* rng, ForwardTape* tape) {
  const ModelSpec& spec = model.spec();
  const TensorIndex idx(spec);
  const int batch_size = static_cast<int>(batch.size());
  if (batch_size == 0) throw Error(ErrorKind::kEmptySequence, "empty batch");

  int steps = 0;
  std::vector<int> lengths(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const Sequence& s = *batch[b];
    if (s.rows() != spec.input_dim) {
      throw Error(ErrorKind::kDimMismatch,
                  fmt::format("frame dim {} != model input dim {}", s.rows(), spec.input_dim),
                  "input_dim", static_cast<double>(s.rows()));
    }
    if (s.cols() == 0) throw Error(ErrorKind::kEmptySequence, "sequence has no frames");
    lengths[b] = static_cast<int>(s.cols());
    steps = std::max(steps, lengths[b]);
  }

  // finished[t] lists the columns whose sequence ended before step t.
  std::vector<std::vector<int>> finished(steps);
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch_size; ++b) {
      if (t >= lengths[b]) finished[t].push_back(b);
    }
  }

  const int d = spec.input_dim;
  std::vector<MatrixXd> x(steps, MatrixXd::Constant(d, batch_size, -1.0));
  for (int b = 0; b < batch_size; ++b) {
    for (int t = 0; t < lengths[b]; ++t) x[t].col(b) = batch[b]->col(t);
  }

  std::vector<MatrixXd> current;
  if (spec.has_conv()) {
    const auto w = model.tensor(idx.conv_weight);
    const auto bias = model.tensor(idx.conv_bias);
    const int k = spec.conv_kernel;
    current.resize(steps);
    for (int t = 0; t < steps; ++t) {
      MatrixXd y = bias.col(0).replicate(1, batch_size);
      for (int j = 0; j < k; ++j) {
        const int src = t - (k - 1) + j;
        if (src >= 0) y.noalias() += w.middleCols(j * d, d) * x[src];
      }
      current[t] = std::move(y);
    }
  } else {
    current = x;
  }

  if (tape) {
    tape->batch = batch_size;
    tape->steps = steps;
    tape->lengths = lengths;
    tape->active = MatrixXd::Zero(steps, batch_size);
    for (int b = 0; b < batch_size; ++b) tape->active.col(b).head(lengths[b]).setOnes();
    tape->input = x;
    tape->layers.assign(spec.num_layers, {});
  }

  const int h = spec.hidden_size;
  const bool gru = spec.is_gru();
  for (int l = 0; l < spec.num_layers; ++l) {
    const auto w = model.tensor(idx.layer_weight(l));
    const auto bias = model.tensor(idx.layer_bias(l)).col(0);
    const int in_dim = static_cast<int>(current[0].rows());
    ForwardTape::Layer* rec = tape ? &tape->layers[l] : nullptr;

    if (l > 0 && training && spec.dropout > 0.0) {
      if (!rng) throw Error(ErrorKind::kInvalidConfig, "dropout requires a random generator");
      std::bernoulli_distribution keep(1.0 - spec.dropout);
      const double scale = 1.0 / (1.0 - spec.dropout);
      for (int t = 0; t < steps; ++t) {
        MatrixXd mask(in_dim, batch_size);
        for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = keep(*rng) ? scale : 0.0;
        current[t] = current[t].cwiseProduct(mask);
        if (rec) rec->drop.push_back(std::move(mask));
      }
    }

    MatrixXd hidden = MatrixXd::Zero(h, batch_size);
    MatrixXd cell = MatrixXd::Zero(h, batch_size);
    if (rec) {
      rec->in = current;
      rec->hidden.reserve(steps + 1);
      rec->hidden.push_back(hidden);
      if (!gru) rec->cell.push_back(cell);
    }
    std::vector<MatrixXd> outputs(steps);
    for (int t = 0; t < steps; ++t) {
      const MatrixXd& in = current[t];
      if (!gru) {
        MatrixXd z = w.leftCols(in_dim) * in;
        z.noalias() += w.rightCols(h) * hidden;
        z.colwise() += bias;
        MatrixXd gates(4 * h, batch_size);
        gates.topRows(h) = sigmoid(z.topRows(h));
        gates.middleRows(h, h) = sigmoid(z.middleRows(h, h));
        gates.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh().matrix();
        gates.bottomRows(h) = sigmoid(z.bottomRows(h));
        MatrixXd next_cell = gates.middleRows(h, h).cwiseProduct(cell) +
                             gates.topRows(h).cwiseProduct(gates.middleRows(2 * h, h));
        MatrixXd tanh_cell = next_cell.array().tanh().matrix();
        MatrixXd next_hidden = gates.bottomRows(h).cwiseProduct(tanh_cell);
        hold_finished(next_cell, cell, finished[t]);
        hold_finished(next_hidden, hidden, finished[t]);
        cell = std::move(next_cell);
        hidden = std::move(next_hidden);
        if (rec) {
          rec->gates.push_back(std::move(gates));
          rec->tanh_cell.push_back(std::move(tanh_cell));
          rec->cell.push_back(cell);
        }
      } else {
        MatrixXd zr = w.topRows(2 * h).leftCols(in_dim) * in;
        zr.noalias() += w.topRows(2 * h).rightCols(h) * hidden;
        zr.colwise() += bias.head(2 * h);
        MatrixXd gates(3 * h, batch_size);
        gates.topRows(2 * h) = sigmoid(zr);
        const MatrixXd reset_hidden = gates.middleRows(h, h).cwiseProduct(hidden);
        MatrixXd zn = w.bottomRows(h).leftCols(in_dim) * in;
        zn.noalias() += w.bottomRows(h).rightCols(h) * reset_hidden;
        zn.colwise() += bias.tail(h);
        gates.bottomRows(h) = zn.array().tanh().matrix();
        const auto update = gates.topRows(h).array();
        MatrixXd next_hidden =
            ((1.0 - update) * gates.bottomRows(h).array() + update * hidden.array()).matrix();
        hold_finished(next_hidden, hidden, finished[t]);
        hidden = std::move(next_hidden);
        if (rec) rec->gates.push_back(std::move(gates));
      }
      outputs[t] = hidden;
      if (rec) rec->hidden.push_back(hidden);
    }
    current = std::move(outputs);
  }

  BatchOutput out;
  out.hidden = current.back();
  out.logits = model.tensor(idx.head_weight) * out.hidden;
  out.logits.colwise() += model.tensor(idx.head_bias).col(0);
  return out;
}

std::vector<double> backward(const RecurrentModel& model, const ForwardTape& tape,
                             const MatrixXd& dlogits) {
  const ModelSpec& spec = model.spec();
  const TensorIndex idx(spec);
  const int batch_size = tape.batch;
  const int steps = tape.steps;
  const int h = spec.hidden_size;
  const bool gru = spec.is_gru();

  std::vector<double> grad(model.parameter_count(), 0.0);
  auto gview = [&](std::size_t i) {
    const TensorInfo& t = model.tensors()[i];
    return Eigen::Map<MatrixXd>(grad.data() + t.offset, t.rows, t.cols);
  };

  std::vector<std::vector<int>> finished(steps);
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch_size; ++b) {
      if (tape.active(t, b) == 0.0) finished[t].push_back(b);
    }
  }

  const MatrixXd& top_hidden = tape.layers.back().hidden.back();
  gview(idx.head_weight).noalias() += dlogits * top_hidden.transpose();
  gview(idx.head_bias).col(0) += dlogits.rowwise().sum();

  // Gradient arriving at each step's output of the layer being processed.
  std::vector<MatrixXd> d_out(steps, MatrixXd::Zero(h, batch_size));
  d_out.back() = model.tensor(idx.head_weight).transpose() * dlogits;

  for (int l = spec.num_layers - 1; l >= 0; --l) {
    const ForwardTape::Layer& rec = tape.layers[l];
    const auto w = model.tensor(idx.layer_weight(l));
    auto gw = gview(idx.layer_weight(l));
    auto gb = gview(idx.layer_bias(l)).col(0);
    const int in_dim = static_cast<int>(rec.in[0].rows());
    std::vector<MatrixXd> d_in(steps);

    MatrixXd dh = MatrixXd::Zero(h, batch_size);
    MatrixXd dc = MatrixXd::Zero(h, batch_size);
    for (int t = steps - 1; t >= 0; --t) {
      dh += d_out[t];
      const MatrixXd& h_prev = rec.hidden[t];
      const MatrixXd& in = rec.in[t];
      const MatrixXd& gates = rec.gates[t];
      if (!gru) {
        const MatrixXd& c_prev = rec.cell[t];
        const MatrixXd& tanh_cell = rec.tanh_cell[t];
        const auto i_g = gates.topRows(h).array();
        const auto f_g = gates.middleRows(h, h).array();
        const auto g_g = gates.middleRows(2 * h, h).array();
        const auto o_g = gates.bottomRows(h).array();
        MatrixXd dc_total =
            (dc.array() + dh.array() * o_g * (1.0 - tanh_cell.array().square())).matrix();
        MatrixXd dz(4 * h, batch_size);
        dz.topRows(h) = (dc_total.array() * g_g * i_g * (1.0 - i_g)).matrix();
        dz.middleRows(h, h) = (dc_total.array() * c_prev.array() * f_g * (1.0 - f_g)).matrix();
        dz.middleRows(2 * h, h) = (dc_total.array() * i_g * (1.0 - g_g.square())).matrix();
        dz.bottomRows(h) = (dh.array() * tanh_cell.array() * o_g * (1.0 - o_g)).matrix();
        zero_columns(dz, finished[t]);

        gw.leftCols(in_dim).noalias() += dz * in.transpose();
        gw.rightCols(h).noalias() += dz * h_prev.transpose();
        gb += dz.rowwise().sum();
        d_in[t].noalias() = w.leftCols(in_dim).transpose() * dz;

        MatrixXd dh_prev = w.rightCols(h).transpose() * dz;
        MatrixXd dc_prev = dc_total.cwiseProduct(gates.middleRows(h, h));
        for (int b : finished[t]) {
          dh_prev.col(b) = dh.col(b);
          dc_prev.col(b) = dc.col(b);
        }
        dh = std::move(dh_prev);
        dc = std::move(dc_prev);
      } else {
        const auto z_g = gates.topRows(h).array();
        const auto r_g = gates.middleRows(h, h).array();
        const auto n_g = gates.bottomRows(h).array();
        const MatrixXd reset_hidden = (r_g * h_prev.array()).matrix();

        MatrixXd dzn = (dh.array() * (1.0 - z_g) * (1.0 - n_g.square())).matrix();
        zero_columns(dzn, finished[t]);
        MatrixXd dupdate = (dh.array() * (h_prev.array() - n_g)).matrix();

        gw.bottomRows(h).leftCols(in_dim).noalias() += dzn * in.transpose();
        gw.bottomRows(h).rightCols(h).noalias() += dzn * reset_hidden.transpose();
        gb.tail(h) += dzn.rowwise().sum();

        const MatrixXd d_reset_hidden = w.bottomRows(h).rightCols(h).transpose() * dzn;
        MatrixXd dzr(2 * h, batch_size);
        dzr.topRows(h) = (dupdate.array() * z_g * (1.0 - z_g)).matrix();
        dzr.bottomRows(h) =
            (d_reset_hidden.array() * h_prev.array() * r_g * (1.0 - r_g)).matrix();
        zero_columns(dzr, finished[t]);

        gw.topRows(2 * h).leftCols(in_dim).noalias() += dzr * in.transpose();
        gw.topRows(2 * h).rightCols(h).noalias() += dzr * h_prev.transpose();
        gb.head(2 * h) += dzr.rowwise().sum();

        d_in[t].noalias() = w.bottomRows(h).leftCols(in_dim).transpose() * dzn;
        d_in[t].noalias() += w.topRows(2 * h).leftCols(in_dim).transpose() * dzr;

        MatrixXd dh_prev = (dh.array() * z_g + d_reset_hidden.array() * r_g).matrix();
        dh_prev.noalias() += w.topRows(2 * h).rightCols(h).transpose() * dzr;
        for (int b : finished[t]) dh_prev.col(b) = dh.col(b);
        dh = std::move(dh_prev);
      }
    }

    if (!rec.drop.empty()) {
      for (int t = 0; t < steps; ++t) d_in[t] = d_in[t].cwiseProduct(rec.drop[t]);
    }
    if (l > 0) {
      d_out = std::move(d_in);
    } else if (spec.has_conv()) {
      auto gcw = gview(idx.conv_weight);
      auto gcb = gview(idx.conv_bias).col(0);
      const int k = spec.conv_kernel;
      const int d = spec.input_dim;
      for (int t = 0; t < steps; ++t) {
        gcb += d_in[t].rowwise().sum();
        for (int j = 0; j < k; ++j) {
          const int src = t - (k - 1) + j;
          if (src >= 0) gcw.middleCols(j * d, d).noalias() += d_in[t] * tape.input[src].transpose();
        }
      }
    }
  }
  return grad;
}

ForwardResult forward(const RecurrentModel& model, const Sequence& sequence, bool training,
                      std::mt19937_64* rng) {
  const Sequence* one[] = {&sequence};
  const BatchOutput out = forward_batch(model, one, training, rng);
  return {out.logits.col(0), out.hidden.col(0)};
}

}  // namespace pheno
