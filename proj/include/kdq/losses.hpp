#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kdq {

// Teacher/student score-matching objectives. Each takes teacher scores T
// and student scores S over the same candidate list and returns the loss;
// when `grad` is non-empty it receives dLoss/dS.

enum class LossKind { mse, margin_mse, ranknet, kl_div, listnet };

LossKind parse_loss(std::string_view name);
std::string_view loss_name(LossKind kind);

/// sum_d (s_d - t_d)^2
double mse_loss(std::span<const double> teacher, std::span<const double> student,
                std::span<double> grad = {});

/// Sum over ordered pairs d1 != d2 of ((t1 - t2) - (s1 - s2))^2, evaluated in
/// linear time through sum_{i,j} (e_i - e_j)^2 = 2n sum e^2 - 2 (sum e)^2.
double margin_mse_loss(std::span<const double> teacher, std::span<const double> student,
                       std::span<double> grad = {});

/// Teacher-weighted RankNet: -sum over ordered pairs with t1 > t2 of
/// (t1 - t2) * log sigmoid(s1 - s2). Pairs with equal teacher scores
/// contribute nothing.
double ranknet_loss(std::span<const double> teacher, std::span<const double> student,
                    std::span<double> grad = {});

/// KL(softmax(S) || softmax(T)) = sum_d phi^s_d log(phi^s_d / phi^t_d).
double kl_div_loss(std::span<const double> teacher, std::span<const double> student,
                   std::span<double> grad = {});

/// Cross entropy H(softmax(T), softmax(S)); gradient phi^s - phi^t.
double listnet_loss(std::span<const double> teacher, std::span<const double> student,
                    std::span<double> grad = {});

double distill_loss(LossKind kind, std::span<const double> teacher,
                    std::span<const double> student, std::span<double> grad = {});

/// exp(s_d) / sum exp(s), computed with max subtraction.
std::vector<double> softmax_dist(std::span<const double> scores);

/// log of sum exp(s), stable.
double log_sum_exp(std::span<const double> scores);

}  // namespace kdq
