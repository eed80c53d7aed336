#include "dfnsm/tape.hpp"

#include <algorithm>
#include <cmath>

namespace dfnsm::numcore {

namespace {

void check_table_ids(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape.size() != 2) throw ValidationError("embedding table must be 2-D");
  const int rows = static_cast<int>(table.shape[0]);
  for (int id : ids) {
    if (id < 0 || id >= rows) {
      throw ValidationError("embedding id " + std::to_string(id) + " outside [0, " +
                            std::to_string(rows) + ")");
    }
  }
}

}  // namespace

Tape::NodeId Tape::param(Tensor& t) {
  if (!t.requires_grad || t.grad.size() != t.values.size()) {
    throw ValidationError("param leaves need requires_grad with an allocated grad buffer");
  }
  Node n;
  n.external = &t;
  n.bound = &t;
  const NodeId self = nodes_.size();
  n.backprop = [self](Tape& tape) {
    Node& leaf = tape.nodes_[self];
    for (std::size_t i = 0; i < leaf.grad.size(); ++i) {
      leaf.bound->grad[i] += leaf.grad[i];
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::constant(Tensor t) {
  Node n;
  n.owned = std::move(t);
  return push(std::move(n));
}

Tape::NodeId Tape::constant_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return constant(Tensor::from_values({n}, std::move(values)));
}

Tape::NodeId Tape::embedding_lookup_sum(NodeId table, const std::vector<int>& ids) {
  const Tensor& tab = value(table);
  check_table_ids(tab, ids);
  const std::size_t dim = tab.shape[1];
  Node n;
  n.owned = Tensor::zeros({dim});
  for (int id : ids) {
    const double* row = tab.values.data() + static_cast<std::size_t>(id) * dim;
    for (std::size_t c = 0; c < dim; ++c) n.owned.values[c] += row[c];
  }
  const NodeId self = nodes_.size();
  n.backprop = [self, table, ids, dim](Tape& tape) {
    const std::vector<double>& gout = tape.grad_of(self);
    std::vector<double>& gtab = tape.grad_of(table);
    for (int id : ids) {
      double* row = gtab.data() + static_cast<std::size_t>(id) * dim;
      for (std::size_t c = 0; c < dim; ++c) row[c] += gout[c];
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::embedding_lookup_seq(NodeId table, const std::vector<int>& ids) {
  const Tensor& tab = value(table);
  check_table_ids(tab, ids);
  if (ids.empty()) throw ValidationError("embedding_lookup_seq needs at least one id");
  const std::size_t dim = tab.shape[1];
  Node n;
  n.owned = Tensor::zeros({ids.size(), dim});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const double* row = tab.values.data() + static_cast<std::size_t>(ids[t]) * dim;
    std::copy(row, row + dim, n.owned.values.begin() + t * dim);
  }
  const NodeId self = nodes_.size();
  n.backprop = [self, table, ids, dim](Tape& tape) {
    const std::vector<double>& gout = tape.grad_of(self);
    std::vector<double>& gtab = tape.grad_of(table);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      double* row = gtab.data() + static_cast<std::size_t>(ids[t]) * dim;
      for (std::size_t c = 0; c < dim; ++c) row[c] += gout[t * dim + c];
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::conv1d(NodeId input, NodeId kernels, NodeId bias) {
  const Tensor& in = value(input);
  const Tensor& k = value(kernels);
  const Tensor& b = value(bias);
  if (in.shape.size() != 2 || k.shape.size() != 3 || b.shape.size() != 1) {
    throw ValidationError("conv1d expects input [L,e], kernels [f,w,e], bias [f]");
  }
  const std::size_t len = in.shape[0], emb = in.shape[1];
  const std::size_t filters = k.shape[0], window = k.shape[1];
  if (k.shape[2] != emb) throw ValidationError("conv1d kernel depth does not match input");
  if (b.shape[0] != filters) throw ValidationError("conv1d bias length does not match filters");
  if (len < window) {
    throw ValidationError("conv1d input length " + std::to_string(len) +
                          " shorter than window " + std::to_string(window));
  }
  const std::size_t out_len = len - window + 1;

  Node n;
  n.owned = Tensor::zeros({out_len, filters});
  for (std::size_t p = 0; p < out_len; ++p) {
    for (std::size_t j = 0; j < filters; ++j) {
      double acc = b.values[j];
      for (std::size_t a = 0; a < window; ++a) {
        for (std::size_t c = 0; c < emb; ++c) {
          acc += in.values[(p + a) * emb + c] * k.values[(j * window + a) * emb + c];
        }
      }
      n.owned.values[p * filters + j] = acc;
    }
  }
  const NodeId self = nodes_.size();
  n.backprop = [self, input, kernels, bias, out_len, filters, window, emb](Tape& tape) {
    const std::vector<double>& gout = tape.grad_of(self);
    const Tensor& in = tape.value(input);
    const Tensor& k = tape.value(kernels);
    std::vector<double>& gin = tape.grad_of(input);
    std::vector<double>& gk = tape.grad_of(kernels);
    std::vector<double>& gb = tape.grad_of(bias);
    for (std::size_t p = 0; p < out_len; ++p) {
      for (std::size_t j = 0; j < filters; ++j) {
        const double g = gout[p * filters + j];
        gb[j] += g;
        for (std::size_t a = 0; a < window; ++a) {
          for (std::size_t c = 0; c < emb; ++c) {
            gin[(p + a) * emb + c] += g * k.values[(j * window + a) * emb + c];
            gk[(j * window + a) * emb + c] += g * in.values[(p + a) * emb + c];
          }
        }
      }
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId x) {
  const Tensor& in = value(x);
  Node n;
  n.owned = in;
  n.owned.requires_grad = false;
  n.owned.grad.clear();
  for (double& v : n.owned.values) {
    min_relu_margin_ = std::min(min_relu_margin_, std::fabs(v));
    v = std::max(v, 0.0);
  }
  const NodeId self = nodes_.size();
  n.backprop = [self, x](Tape& tape) {
    const std::vector<double>& gout = tape.grad_of(self);
    const Tensor& in = tape.value(x);
    std::vector<double>& gin = tape.grad_of(x);
    for (std::size_t i = 0; i < gout.size(); ++i) {
      if (in.values[i] > 0.0) gin[i] += gout[i];  // subgradient 0 at exactly 0
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::max_pool_over_time(NodeId x) {
  const Tensor& in = value(x);
  if (in.shape.size() != 2) throw ValidationError("max_pool_over_time expects [P,f]");
  const std::size_t positions = in.shape[0], filters = in.shape[1];

  Node n;
  n.owned = Tensor::zeros({filters});
  std::vector<std::size_t> argmax(filters, 0);
  for (std::size_t j = 0; j < filters; ++j) {
    double best = in.values[j];
    double second = -std::numeric_limits<double>::infinity();
    std::size_t best_p = 0;
    for (std::size_t p = 1; p < positions; ++p) {
      const double v = in.values[p * filters + j];
      if (v > best) {
        second = best;
        best = v;
        best_p = p;
      } else {
        second = std::max(second, v);
      }
    }
    // A column whose max is <= 0 is constant zero after relu; small
    // perturbations cannot move its output, so it carries no tie risk.
    if (positions > 1 && best > 0.0) {
      min_pool_margin_ = std::min(min_pool_margin_, best - second);
    }
    n.owned.values[j] = best;
    argmax[j] = best_p;
  }
  const NodeId self = nodes_.size();
  n.backprop = [self, x, argmax, filters](Tape& tape) {
    const std::vector<double>& gout = tape.grad_of(self);
    std::vector<double>& gin = tape.grad_of(x);
    for (std::size_t j = 0; j < filters; ++j) {
      gin[argmax[j] * filters + j] += gout[j];
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::concat(const std::vector<NodeId>& xs) {
  if (xs.empty()) throw ValidationError("concat needs at least one input");
  std::size_t total = 0;
  for (NodeId id : xs) {
    if (value(id).shape.size() != 1) throw ValidationError("concat expects 1-D inputs");
    total += value(id).numel();
  }
  Node n;
  n.owned = Tensor::zeros({total});
  std::size_t off = 0;
  for (NodeId id : xs) {
    const Tensor& v = value(id);
    std::copy(v.values.begin(), v.values.end(), n.owned.values.begin() + off);
    off += v.numel();
  }
  const NodeId self = nodes_.size();
  n.backprop = [self, xs](Tape& tape) {
    const std::vector<double>& gout = tape.grad_of(self);
    std::size_t off = 0;
    for (NodeId id : xs) {
      std::vector<double>& gin = tape.grad_of(id);
      for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[off + i];
      off += gin.size();
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::affine(NodeId input, NodeId weights, NodeId bias) {
  const Tensor& x = value(input);
  const Tensor& w = value(weights);
  const Tensor& b = value(bias);
  if (x.shape.size() != 1 || w.shape.size() != 2 || b.shape.size() != 1) {
    throw ValidationError("affine expects input [a], weights [b,a], bias [b]");
  }
  const std::size_t out_dim = w.shape[0], in_dim = w.shape[1];
  if (x.shape[0] != in_dim || b.shape[0] != out_dim) {
    throw ValidationError("affine shape mismatch");
  }
  Node n;
  n.owned = Tensor::zeros({out_dim});
  for (std::size_t i = 0; i < out_dim; ++i) {
    double acc = b.values[i];
    for (std::size_t j = 0; j < in_dim; ++j) acc += w.values[i * in_dim + j] * x.values[j];
    n.owned.values[i] = acc;
  }
  const NodeId self = nodes_.size();
  n.backprop = [self, input, weights, bias, out_dim, in_dim](Tape& tape) {
    const std::vector<double>& gout = tape.grad_of(self);
    const Tensor& x = tape.value(input);
    const Tensor& w = tape.value(weights);
    std::vector<double>& gx = tape.grad_of(input);
    std::vector<double>& gw = tape.grad_of(weights);
    std::vector<double>& gb = tape.grad_of(bias);
    for (std::size_t i = 0; i < out_dim; ++i) {
      const double g = gout[i];
      gb[i] += g;
      for (std::size_t j = 0; j < in_dim; ++j) {
        gw[i * in_dim + j] += g * x.values[j];
        gx[j] += g * w.values[i * in_dim + j];
      }
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::dot(NodeId u, NodeId v) {
  const Tensor& a = value(u);
  const Tensor& b = value(v);
  if (a.shape.size() != 1 || b.shape.size() != 1 || a.numel() != b.numel()) {
    throw ValidationError("dot expects two equal-length vectors");
  }
  Node n;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a.values[i] * b.values[i];
  n.owned = Tensor::from_values({1}, {acc});
  const NodeId self = nodes_.size();
  n.backprop = [self, u, v](Tape& tape) {
    const double g = tape.grad_of(self)[0];
    const Tensor& a = tape.value(u);
    const Tensor& b = tape.value(v);
    std::vector<double>& ga = tape.grad_of(u);
    std::vector<double>& gb = tape.grad_of(v);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] += g * b.values[i];
      gb[i] += g * a.values[i];
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::mse_loss(const std::vector<NodeId>& predictions,
                            const std::vector<double>& targets) {
  if (predictions.empty() || predictions.size() != targets.size()) {
    throw ValidationError("mse_loss needs equal, nonempty predictions and targets");
  }
  for (NodeId id : predictions) {
    if (value(id).numel() != 1) throw ValidationError("mse_loss predictions must be scalars");
  }
  const double n_inv = 1.0 / static_cast<double>(predictions.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = targets[i] - value(predictions[i]).values[0];
    acc += r * r;
  }
  Node n;
  n.owned = Tensor::from_values({1}, {acc * n_inv});
  const NodeId self = nodes_.size();
  n.backprop = [self, predictions, targets, n_inv](Tape& tape) {
    const double g = tape.grad_of(self)[0];
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const double p = tape.value(predictions[i]).values[0];
      tape.grad_of(predictions[i])[0] += g * 2.0 * (p - targets[i]) * n_inv;
    }
  };
  return push(std::move(n));
}

double Tape::scalar(NodeId id) const {
  const Tensor& v = value(id);
  if (v.numel() != 1) throw ValidationError("node is not scalar");
  return v.values[0];
}

void Tape::backward(NodeId loss) {
  if (value(loss).numel() != 1) throw ValidationError("backward needs a scalar loss");
  for (Node& n : nodes_) n.grad.assign(n.val().numel(), 0.0);
  nodes_[loss].grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].backprop) nodes_[i].backprop(*this);
  }
}

GradCheckReport grad_check(const std::vector<Tensor*>& params,
                           const std::function<Tape::NodeId(Tape&)>& build,
                           double epsilon) {
  for (Tensor* p : params) p->zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    const Tape::NodeId loss = build(tape);
    tape.backward(loss);
  }
  analytic.reserve(params.size());
  for (Tensor* p : params) analytic.push_back(p->grad);

  auto loss_value = [&]() {
    Tape tape;
    return tape.scalar(build(tape));
  };

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double saved = p.values[i];
      p.values[i] = saved + epsilon;
      const double hi = loss_value();
      p.values[i] = saved - epsilon;
      const double lo = loss_value();
      p.values[i] = saved;
      const double numeric = (hi - lo) / (2.0 * epsilon);
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      report.max_rel_err = std::max(report.max_rel_err, std::fabs(a - numeric) / denom);
      ++report.entries_checked;
    }
  }
  for (Tensor* p : params) p->zero_grad();
  return report;
}

}  // namespace dfnsm::numcore
