#include "kdq/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kdq/error.hpp"
#include "ranknet_pairs.hpp"

namespace kdq {

namespace {

void check_shapes(std::span<const double> t, std::span<const double> s, std::span<double> g) {
  if (t.size() != s.size()) throw ContractError("teacher/student score counts differ");
  if (!g.empty() && g.size() != s.size()) throw ContractError("gradient buffer size mismatch");
}

}  // namespace

LossKind parse_loss(std::string_view name) {
  if (name == "mse") return LossKind::mse;
  if (name == "margin_mse" || name == "margin-mse") return LossKind::margin_mse;
  if (name == "ranknet") return LossKind::ranknet;
  if (name == "kl" || name == "kl_div" || name == "kl-div") return LossKind::kl_div;
  if (name == "listnet") return LossKind::listnet;
  throw ConfigError("unknown loss '" + std::string(name) +
                    "' (expected mse, margin_mse, ranknet, kl_div or listnet)");
}

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::mse: return "mse";
    case LossKind::margin_mse: return "margin_mse";
    case LossKind::ranknet: return "ranknet";
    case LossKind::kl_div: return "kl_div";
    case LossKind::listnet: return "listnet";
  }
  return "unknown";
}

double log_sum_exp(std::span<const double> scores) {
  if (scores.empty()) return -std::numeric_limits<double>::infinity();
  const double peak = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (const double s : scores) sum += std::exp(s - peak);
  return peak + std::log(sum);
}

std::vector<double> softmax_dist(std::span<const double> scores) {
  std::vector<double> out(scores.size());
  if (scores.empty()) return out;
  const double peak = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - peak);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

double mse_loss(std::span<const double> teacher, std::span<const double> student,
                std::span<double> grad) {
  check_shapes(teacher, student, grad);
  double loss = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const double e = student[i] - teacher[i];
    loss += e * e;
    if (!grad.empty()) grad[i] = 2.0 * e;
  }
  return loss;
}

double margin_mse_loss(std::span<const double> teacher, std::span<const double> student,
                       std::span<double> grad) {
  check_shapes(teacher, student, grad);
  const auto n = static_cast<double>(teacher.size());
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const double e = student[i] - teacher[i];
    sum += e;
    sum_sq += e * e;
  }
  if (!grad.empty()) {
    for (std::size_t i = 0; i < teacher.size(); ++i) {
      grad[i] = 4.0 * (n * (student[i] - teacher[i]) - sum);
    }
  }
  // Clamp the cancellation error of the closed form; the pair sum is >= 0.
  return std::max(0.0, 2.0 * n * sum_sq - 2.0 * sum * sum);
}

double ranknet_loss(std::span<const double> teacher, std::span<const double> student,
                    std::span<double> grad) {
  check_shapes(teacher, student, grad);
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t n = teacher.size();
  if (n < 2) return 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(teacher[i]) || !std::isfinite(student[i])) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  }

  // In descending teacher order every pair with a positive teacher margin
  // is (a, b) with a < b; tied pairs get weight zero.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return teacher[a] > teacher[b] || (teacher[a] == teacher[b] && a < b);
  });
  std::vector<double> t(n), s(n), g(grad.empty() ? 0 : n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    t[k] = teacher[order[k]];
    s[k] = student[order[k]];
  }
  const double loss =
      detail::ranknet_pair_sweep(t.data(), s.data(), grad.empty() ? nullptr : g.data(), n);
  if (!grad.empty()) {
    for (std::size_t k = 0; k < n; ++k) grad[order[k]] = g[k];
  }
  return loss;
}

double kl_div_loss(std::span<const double> teacher, std::span<const double> student,
                   std::span<double> grad) {
  check_shapes(teacher, student, grad);
  if (teacher.empty()) return 0.0;
  const double lse_t = log_sum_exp(teacher);
  const double lse_s = log_sum_exp(student);
  const auto phi_s = softmax_dist(student);
  // log(phi_s / phi_t) = (s - lse_s) - (t - lse_t)
  double loss = 0.0;
  std::vector<double> log_ratio(teacher.size());
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    log_ratio[i] = (student[i] - lse_s) - (teacher[i] - lse_t);
    loss += phi_s[i] * log_ratio[i];
  }
  if (!grad.empty()) {
    for (std::size_t i = 0; i < teacher.size(); ++i) grad[i] = phi_s[i] * (log_ratio[i] - loss);
  }
  return std::max(0.0, loss);
}

double listnet_loss(std::span<const double> teacher, std::span<const double> student,
                    std::span<double> grad) {
  check_shapes(teacher, student, grad);
  if (teacher.empty()) return 0.0;
  const auto phi_t = softmax_dist(teacher);
  const double lse_s = log_sum_exp(student);
  double loss = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) loss -= phi_t[i] * (student[i] - lse_s);
  if (!grad.empty()) {
    const auto phi_s = softmax_dist(student);
    for (std::size_t i = 0; i < teacher.size(); ++i) grad[i] = phi_s[i] - phi_t[i];
  }
  return loss;
}

double distill_loss(LossKind kind, std::span<const double> teacher,
                    std::span<const double> student, std::span<double> grad) {
  switch (kind) {
    case LossKind::mse: return mse_loss(teacher, student, grad);
    case LossKind::margin_mse: return margin_mse_loss(teacher, student, grad);
    case LossKind::ranknet: return ranknet_loss(teacher, student, grad);
    case LossKind::kl_div: return kl_div_loss(teacher, student, grad);
    case LossKind::listnet: return listnet_loss(teacher, student, grad);
  }
  throw ContractError("unknown loss kind");
}

}  // namespace kdq
