#include "translid/backend.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "translid/errors.hpp"

namespace translid {

namespace {

void check_dataset(const std::vector<Vec>& xs, const std::vector<int>& labels,
                   int num_classes) {
  if (xs.empty()) throw std::invalid_argument("empty training set");
  if (xs.size() != labels.size())
    throw std::invalid_argument(msg("feature/label count mismatch: ", xs.size(),
                                    " vs ", labels.size()));
  const std::size_t dim = xs.front().size();
  if (dim == 0) throw std::invalid_argument("zero-dimensional features");
  for (const Vec& x : xs)
    if (x.size() != dim)
      throw std::invalid_argument(msg("ragged feature dims: ", x.size(), " vs ",
                                      dim));
  for (int y : labels)
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument(
          msg("label ", y, " outside [0, ", num_classes, ")"));
}

}  // namespace

LdaModel lda_fit(const std::vector<Vec>& embeddings,
                 const std::vector<int>& labels, int num_classes, int r) {
  if (num_classes < 2)
    throw std::invalid_argument(msg("need >= 2 classes, got ", num_classes));
  check_dataset(embeddings, labels, num_classes);
  if (r < 1 || r > num_classes - 1)
    throw std::invalid_argument(
        msg("rank ", r, " outside [1, ", num_classes - 1,
            "] (at most classes - 1 discriminant directions)"));
  const int dim = static_cast<int>(embeddings.front().size());
  const int n = static_cast<int>(embeddings.size());

  std::vector<int> counts(num_classes, 0);
  for (int y : labels) ++counts[y];
  for (int c = 0; c < num_classes; ++c)
    if (counts[c] < r + 1)
      throw std::invalid_argument(msg("class ", c, " has ", counts[c],
                                      " samples; need at least ", r + 1));

  Vec mean(dim, 0.0);
  Matrix class_means(num_classes, dim);
  for (int i = 0; i < n; ++i) {
    const Vec& x = embeddings[i];
    double* cm = class_means.row(labels[i]);
    for (int j = 0; j < dim; ++j) {
      mean[j] += x[j];
      cm[j] += x[j];
    }
  }
  for (int j = 0; j < dim; ++j) mean[j] /= n;
  for (int c = 0; c < num_classes; ++c) {
    double* cm = class_means.row(c);
    for (int j = 0; j < dim; ++j) cm[j] /= counts[c];
  }

  Matrix sw(dim, dim);
  Matrix sb(dim, dim);
  Vec diff(dim);
  for (int i = 0; i < n; ++i) {
    const double* cm = class_means.row(labels[i]);
    for (int j = 0; j < dim; ++j) diff[j] = embeddings[i][j] - cm[j];
    outer_acc(sw, diff, diff);
  }
  for (int c = 0; c < num_classes; ++c) {
    const double* cm = class_means.row(c);
    for (int j = 0; j < dim; ++j) diff[j] = cm[j] - mean[j];
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) sb(a, b) += counts[c] * diff[a] * diff[b];
  }
  for (std::size_t k = 0; k < sw.size(); ++k) {
    sw.data()[k] /= n;
    sb.data()[k] /= n;
  }

  double trace = 0.0;
  for (int j = 0; j < dim; ++j) trace += sw(j, j);
  const double delta = 1e-6 * trace / dim;
  for (int j = 0; j < dim; ++j) sw(j, j) += delta;

  Matrix l;
  try {
    l = cholesky_lower(sw);
  } catch (const NumericError&) {
    throw NumericError("within-class scatter is singular after ridge");
  }

  // M = L^-1 S_b L^-T is symmetric; its eigenvectors y map back to the
  // generalized problem's directions via v = L^-T y.
  Matrix a(dim, dim);  // columns: L^-1 * (columns of S_b)
  Vec col(dim);
  for (int j = 0; j < dim; ++j) {
    for (int i = 0; i < dim; ++i) col[i] = sb(i, j);
    Vec sol = solve_lower(l, col);
    for (int i = 0; i < dim; ++i) a(i, j) = sol[i];
  }
  Matrix m(dim, dim);  // rows: L^-1 * (rows of a), then symmetrized
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) col[j] = a(i, j);
    Vec sol = solve_lower(l, col);
    for (int j = 0; j < dim; ++j) m(i, j) = sol[j];
  }
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) {
      const double s = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = s;
      m(j, i) = s;
    }

  Matrix eigvecs;
  Vec eigvals;
  symmetric_eig(m, &eigvecs, &eigvals);

  LdaModel model;
  model.mean = mean;
  model.projection = Matrix(r, dim);
  for (int k = 0; k < r; ++k) {
    for (int i = 0; i < dim; ++i) col[i] = eigvecs(i, k);
    Vec v = solve_lower_transposed(l, col);
    for (int i = 0; i < dim; ++i) model.projection(k, i) = v[i];
  }
  return model;
}

Vec lda_apply(const LdaModel& m, const Vec& x) {
  if (static_cast<int>(x.size()) != m.in_dim())
    throw std::invalid_argument(msg("feature dim ", x.size(),
                                    " != projection input dim ", m.in_dim()));
  Vec centered(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) centered[j] = x[j] - m.mean[j];
  return matvec(m.projection, centered);
}

Vec length_normalize(const Vec& x) {
  const double norm = l2_norm(x);
  if (norm == 0.0) throw std::invalid_argument("cannot length-normalize the zero vector");
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / norm;
  return out;
}

std::vector<Param*> LrModel::params() {
  std::vector<Param*> out;
  for (std::size_t m = 0; m < expert_w.size(); ++m) {
    out.push_back(&expert_w[m]);
    out.push_back(&expert_b[m]);
  }
  if (gate_w) {
    out.push_back(&*gate_w);
    out.push_back(&*gate_b);
  }
  return out;
}

LrModel LrModel::make(int num_classes, int feat_dim, int num_experts, Rng& rng) {
  if (num_experts < 1)
    throw std::invalid_argument(msg("expert count must be >= 1, got ", num_experts));
  if (num_classes < 2)
    throw std::invalid_argument(msg("need >= 2 classes, got ", num_classes));
  if (feat_dim < 1)
    throw std::invalid_argument(msg("feature dim must be >= 1, got ", feat_dim));
  LrModel model;
  for (int m = 0; m < num_experts; ++m) {
    model.expert_w.emplace_back(msg("lr.expert", m, ".w"), num_classes, feat_dim);
    model.expert_b.emplace_back(msg("lr.expert", m, ".b"), num_classes, 1);
    if (num_experts > 1) {
      // Symmetry breaking: identical experts receive identical gradients and
      // would never diverge from one another.
      Matrix& w = model.expert_w.back().value;
      for (std::size_t k = 0; k < w.size(); ++k)
        w.data()[k] = 0.01 * rng.gaussian();
    }
  }
  if (num_experts > 1) {
    model.gate_w.emplace("lr.gate.w", num_experts, feat_dim);
    model.gate_b.emplace("lr.gate.b", num_experts, 1);
  }
  return model;
}

double lr_objective(LrModel& m, const std::vector<Vec>& feats,
                    const std::vector<int>& labels, double l2,
                    double grad_scale) {
  const int experts = m.num_experts();
  const int classes = m.num_classes();
  check_dataset(feats, labels, classes);
  if (static_cast<int>(feats.front().size()) != m.feat_dim())
    throw std::invalid_argument(msg("feature dim ", feats.front().size(),
                                    " != model dim ", m.feat_dim()));
  const int n = static_cast<int>(feats.size());
  const double inv_n = 1.0 / n;

  double loss = 0.0;
  Vec gate_logits(experts), log_gate(experts), mix(experts);
  Matrix expert_lp(experts, classes);
  for (int i = 0; i < n; ++i) {
    const Vec& x = feats[i];
    const int y = labels[i];
    if (experts == 1) {
      Vec logits = matvec(m.expert_w[0].value, x);
      for (int k = 0; k < classes; ++k) logits[k] += m.expert_b[0].value(k, 0);
      Vec lp = log_softmax(logits);
      loss -= inv_n * lp[y];
      if (grad_scale != 0.0) {
        // d(-lp[y])/d logits = softmax - onehot
        Vec dl(classes);
        for (int k = 0; k < classes; ++k)
          dl[k] = grad_scale * inv_n * (std::exp(lp[k]) - (k == y ? 1.0 : 0.0));
        if (!m.expert_w[0].frozen) outer_acc(m.expert_w[0].grad, dl, x);
        if (!m.expert_b[0].frozen)
          for (int k = 0; k < classes; ++k) m.expert_b[0].grad(k, 0) += dl[k];
      }
      continue;
    }

    gate_logits = matvec(m.gate_w->value, x);
    for (int g = 0; g < experts; ++g) gate_logits[g] += m.gate_b->value(g, 0);
    log_gate = log_softmax(gate_logits);
    for (int e = 0; e < experts; ++e) {
      Vec logits = matvec(m.expert_w[e].value, x);
      for (int k = 0; k < classes; ++k) logits[k] += m.expert_b[e].value(k, 0);
      Vec lp = log_softmax(logits);
      for (int k = 0; k < classes; ++k) expert_lp(e, k) = lp[k];
      mix[e] = log_gate[e] + lp[y];
    }
    const double lpy = logsumexp(mix);
    loss -= inv_n * lpy;
    if (grad_scale != 0.0) {
      const double s = grad_scale * inv_n;
      Vec resp(experts);  // posterior responsibility of each expert for y
      for (int e = 0; e < experts; ++e) resp[e] = std::exp(mix[e] - lpy);
      // Gate: d(-lpy)/d gate_logits = softmax(gate) - resp
      Vec dgate(experts);
      for (int g = 0; g < experts; ++g)
        dgate[g] = s * (std::exp(log_gate[g]) - resp[g]);
      if (!m.gate_w->frozen) outer_acc(m.gate_w->grad, dgate, x);
      if (!m.gate_b->frozen)
        for (int g = 0; g < experts; ++g) m.gate_b->grad(g, 0) += dgate[g];
      // Experts: responsibility-weighted softmax-minus-onehot.
      for (int e = 0; e < experts; ++e) {
        Vec dl(classes);
        for (int k = 0; k < classes; ++k)
          dl[k] = s * resp[e] *
                  (std::exp(expert_lp(e, k)) - (k == y ? 1.0 : 0.0));
        if (!m.expert_w[e].frozen) outer_acc(m.expert_w[e].grad, dl, x);
        if (!m.expert_b[e].frozen)
          for (int k = 0; k < classes; ++k) m.expert_b[e].grad(k, 0) += dl[k];
      }
    }
  }

  if (l2 != 0.0) {
    std::vector<Param*> weight_params;
    for (Param& p : m.expert_w) weight_params.push_back(&p);
    if (m.gate_w) weight_params.push_back(&*m.gate_w);
    for (Param* p : weight_params) {
      double sq = 0.0;
      for (std::size_t k = 0; k < p->value.size(); ++k) {
        const double v = p->value.data()[k];
        sq += v * v;
        if (grad_scale != 0.0 && !p->frozen)
          p->grad.data()[k] += grad_scale * l2 * v;
      }
      loss += 0.5 * l2 * sq;
    }
  }
  return loss;
}

LrModel lr_fit(const std::vector<Vec>& feats, const std::vector<int>& labels,
               int num_classes, int num_experts, double l2, int epochs,
               Rng& rng) {
  check_dataset(feats, labels, num_classes);
  LrModel model = LrModel::make(num_classes,
                                static_cast<int>(feats.front().size()),
                                num_experts, rng);
  std::vector<Param*> params = model.params();

  double step = 1.0;
  double loss = lr_objective(model, feats, labels, l2, 0.0);
  std::vector<Matrix> saved(params.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    zero_grads(params);
    lr_objective(model, feats, labels, l2, 1.0);
    for (std::size_t p = 0; p < params.size(); ++p) saved[p] = params[p]->value;
    // Backtracking line search: halve until the full-batch loss decreases.
    bool accepted = false;
    while (step >= 1e-12) {
      for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix& v = params[p]->value;
        const Matrix& g = params[p]->grad;
        for (std::size_t k = 0; k < v.size(); ++k)
          v.data()[k] = saved[p].data()[k] - step * g.data()[k];
      }
      const double trial = lr_objective(model, feats, labels, l2, 0.0);
      if (trial <= loss) {
        loss = trial;
        step = std::min(step * 1.2, 1e3);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      for (std::size_t p = 0; p < params.size(); ++p)
        params[p]->value = saved[p];
      break;  // no descent direction at the smallest step: converged
    }
  }
  return model;
}

Vec lr_score(const LrModel& m, const Vec& x) {
  const int experts = m.num_experts();
  const int classes = m.num_classes();
  if (static_cast<int>(x.size()) != m.feat_dim())
    throw std::invalid_argument(msg("feature dim ", x.size(), " != model dim ",
                                    m.feat_dim()));
  if (experts == 1) {
    Vec logits = matvec(m.expert_w[0].value, x);
    for (int k = 0; k < classes; ++k) logits[k] += m.expert_b[0].value(k, 0);
    return log_softmax(logits);
  }
  Vec gate_logits = matvec(m.gate_w->value, x);
  for (int g = 0; g < experts; ++g) gate_logits[g] += m.gate_b->value(g, 0);
  Vec log_gate = log_softmax(gate_logits);
  Matrix lp(experts, classes);
  for (int e = 0; e < experts; ++e) {
    Vec logits = matvec(m.expert_w[e].value, x);
    for (int k = 0; k < classes; ++k) logits[k] += m.expert_b[e].value(k, 0);
    Vec elp = log_softmax(logits);
    for (int k = 0; k < classes; ++k) lp(e, k) = elp[k];
  }
  Vec out(classes);
  Vec acc(experts);
  for (int k = 0; k < classes; ++k) {
    for (int e = 0; e < experts; ++e) acc[e] = log_gate[e] + lp(e, k);
    out[k] = logsumexp(acc);
  }
  return out;
}

}  // namespace translid
