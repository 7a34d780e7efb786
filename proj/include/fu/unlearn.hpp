#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "fu/dataset.hpp"
#include "fu/fedsim.hpp"
#include "fu/model.hpp"

namespace fu {

enum class UnlearnMethod { Retrain, FineTune, ContinueToTrain, FedEraser, Pga };

inline constexpr UnlearnMethod kAllMethods[] = {UnlearnMethod::Retrain, UnlearnMethod::FineTune,
                                                UnlearnMethod::ContinueToTrain, UnlearnMethod::FedEraser,
                                                UnlearnMethod::Pga};

/// "retrain", "finetune", "c2t", "federaser", "pga".
std::string_view method_name(UnlearnMethod m) noexcept;
/// Inverse of method_name; nullopt for unknown names.
std::optional<UnlearnMethod> parse_method(std::string_view name) noexcept;

struct UnlearnOutcome {
    ParamVector params;
    UnlearnMethod method = UnlearnMethod::Retrain;
    CommLedger ledger;
    std::size_t rounds_used = 0;
    std::size_t ascent_steps = 0; // PGA iterations actually taken
};

struct UnlearnOptions {
    std::size_t finetune_rounds = 5;    // at lr/10, one local epoch
    std::size_t c2t_rounds = 5;         // original hyperparameters
    std::size_t calibration_epochs = 1; // FedEraser local epochs per replayed round
    double pga_radius_scale = 0.5;      // radius = scale * ||global||
    std::optional<double> pga_lr;       // defaults to cfg.lr
    std::size_t pga_max_steps = 50;
    double pga_stop_margin = 1.0;       // stop once forget loss >= ln(k) + margin
};

/// Fresh model from cfg.seed trained on the retained clients only. This is
/// the reference for every alignment metric.
UnlearnOutcome retrain(std::span<const ClientDataset> retain, const FederationConfig& cfg);

enum class ContinueMode { FineTune, C2T };

/// Further FedAvg rounds on the retained clients starting from `global`.
/// FineTune uses lr/10 and one local epoch; C2T keeps cfg unchanged.
UnlearnOutcome continue_training(const ParamVector& global, std::span<const ClientDataset> retain,
                                 const FederationConfig& cfg, ContinueMode mode, std::size_t rounds);

/// Replays the recorded rounds without `forget_client`. Each replayed step
/// takes its direction from a short calibration run of the retained clients
/// and its length from the stored retained aggregate.
UnlearnOutcome federaser_unlearn(const HistoryStore& history, std::span<const ClientDataset> retain,
                                 int forget_client, const FederationConfig& cfg, std::size_t calibration_epochs = 1);

struct PgaParams {
    double radius = 0.0;
    double lr = 0.0;
    std::size_t max_steps = 50;
    double stop_loss = 0.0;
    std::uint64_t seed = 0; // mini-batch order for forget sets above 1024 samples
};

PgaParams default_pga_params(const ParamVector& global, const FederationConfig& cfg,
                             const UnlearnOptions& options = {});

/// Gradient ascent on the forget-set loss, projected after every step onto
/// the l2 ball of `params.radius` around `reference`.
UnlearnOutcome pga_unlearn(const ParamVector& global, const Dataset& forget, const ParamVector& reference,
                           const PgaParams& params);

/// Class removal: ascent on every sample of the class, then fine-tuning on the
/// retained clients (which no longer hold that class).
UnlearnOutcome class_unlearn(const ParamVector& global, std::span<const ClientDataset> clients, int class_label,
                             const FederationConfig& cfg, const UnlearnOptions& options = {});

struct FederationState {
    ParamVector global;
    std::span<const ClientDataset> clients;
    const HistoryStore* history = nullptr;
    FederationConfig cfg;
};

/// Routes a forget request to the chosen method. FedEraser only serves
/// client-level requests.
UnlearnOutcome dispatch(UnlearnMethod method, const FederationState& state, const ForgetSpec& spec,
                        const UnlearnOptions& options = {});

} // namespace fu
