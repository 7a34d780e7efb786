#include "fu/unlearn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fu/error.hpp"
#include "fu/parallel.hpp"
#include "fu/rng.hpp"

namespace fu {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_live_client(std::span<const ClientDataset> retain) {
    for (const auto& c : retain)
        if (!c.data.empty()) return;
    throw InputError("no retained client holds any data");
}

} // namespace

std::string_view method_name(UnlearnMethod m) noexcept {
    switch (m) {
    case UnlearnMethod::Retrain: return "retrain";
    case UnlearnMethod::FineTune: return "finetune";
    case UnlearnMethod::ContinueToTrain: return "c2t";
    case UnlearnMethod::FedEraser: return "federaser";
    case UnlearnMethod::Pga: return "pga";
    }
    return "unknown";
}

std::optional<UnlearnMethod> parse_method(std::string_view name) noexcept {
    for (auto m : kAllMethods)
        if (method_name(m) == name) return m;
    return std::nullopt;
}

UnlearnOutcome retrain(std::span<const ClientDataset> retain, const FederationConfig& cfg) {
    const auto start = Clock::now();
    require_live_client(retain);
    RunOptions opts;
    opts.record_history = false;
    auto run = run_rounds(init_params(cfg.model, cfg.seed), retain, cfg, opts);
    run.ledger.wall_time = seconds_since(start);
    return {std::move(run.final_params), UnlearnMethod::Retrain, run.ledger, run.ledger.rounds_executed, 0};
}

UnlearnOutcome continue_training(const ParamVector& global, std::span<const ClientDataset> retain,
                                 const FederationConfig& cfg, ContinueMode mode, std::size_t rounds) {
    const auto start = Clock::now();
    require_live_client(retain);
    const auto method = mode == ContinueMode::FineTune ? UnlearnMethod::FineTune : UnlearnMethod::ContinueToTrain;
    FederationConfig tuned = cfg;
    tuned.rounds = rounds;
    if (mode == ContinueMode::FineTune) {
        tuned.lr = cfg.lr / 10.0;
        tuned.local_epochs = 1;
        tuned.seed = derive_seed(cfg.seed, {stream::kFineTune});
    } else {
        tuned.seed = derive_seed(cfg.seed, {stream::kContinueTraining});
    }
    RunOptions opts;
    opts.record_history = false;
    auto run = run_rounds(global, retain, tuned, opts);
    run.ledger.wall_time = seconds_since(start);
    return {std::move(run.final_params), method, run.ledger, run.ledger.rounds_executed, 0};
}

UnlearnOutcome federaser_unlearn(const HistoryStore& history, std::span<const ClientDataset> retain,
                                 int forget_client, const FederationConfig& cfg, std::size_t calibration_epochs) {
    const auto start = Clock::now();
    if (history.records.empty()) throw InputError("history holds no recorded rounds");
    if (calibration_epochs == 0) throw InputError("calibration needs at least one local epoch");
    const bool seen = std::any_of(history.records.begin(), history.records.end(), [&](const RoundRecord& r) {
        return std::any_of(r.updates.begin(), r.updates.end(),
                           [&](const ClientUpdate& u) { return u.client_id == forget_client; });
    });
    if (!seen) throw InputError("client " + std::to_string(forget_client) + " never appears in the history");
    require_live_client(retain);

    FederationConfig cal = cfg;
    cal.local_epochs = calibration_epochs;
    const std::size_t workers = worker_count();

    UnlearnOutcome out{history.records.front().global_before, UnlearnMethod::FedEraser, {}, 0, 0};
    ParamVector& theta = out.params;
    const std::size_t param_count = theta.size();

    for (const RoundRecord& rec : history.records) {
        std::vector<ClientUpdate> stored;
        for (const auto& u : rec.updates)
            if (u.client_id != forget_client) stored.push_back(u);
        if (stored.empty()) continue; // only the forgotten client took part
        const ParamVector old_step = fedavg_aggregate(stored);

        // Calibrate with the retained clients that took part in this round.
        std::vector<const ClientDataset*> participants;
        for (const auto& u : stored)
            for (const auto& c : retain)
                if (c.client_id == u.client_id && !c.data.empty()) participants.push_back(&c);

        std::vector<std::optional<ClientUpdate>> slots(participants.size());
        parallel_for(
            participants.size(),
            [&](std::size_t i) { slots[i] = local_update(theta, *participants[i], cal, rec.round_index); },
            workers);
        std::vector<ClientUpdate> calibrated;
        for (auto& s : slots) calibrated.push_back(std::move(*s));

        ParamVector step = old_step;
        if (!calibrated.empty()) {
            const ParamVector cal_step = fedavg_aggregate(calibrated);
            const double cal_norm = l2_norm(cal_step.values);
            if (cal_norm >= 1e-12) step = (l2_norm(old_step.values) / cal_norm) * cal_step;
        }
        axpy(1.0, step, theta);
        out.ledger.charge_round(participants.size(), param_count);
    }

    out.rounds_used = out.ledger.rounds_executed;
    out.ledger.wall_time = seconds_since(start);
    return out;
}

PgaParams default_pga_params(const ParamVector& global, const FederationConfig& cfg, const UnlearnOptions& options) {
    PgaParams p;
    p.radius = options.pga_radius_scale * l2_norm(global.values);
    p.lr = options.pga_lr.value_or(cfg.lr);
    p.max_steps = options.pga_max_steps;
    p.stop_loss = std::log(static_cast<double>(global.spec.num_classes)) + options.pga_stop_margin;
    p.seed = derive_seed(cfg.seed, {stream::kAscent});
    return p;
}

UnlearnOutcome pga_unlearn(const ParamVector& global, const Dataset& forget, const ParamVector& reference,
                           const PgaParams& params) {
    const auto start = Clock::now();
    if (forget.empty()) throw InputError("forget set is empty");
    if (!(params.radius > 0.0) || !std::isfinite(params.radius)) throw InputError("PGA radius must be positive");
    if (!(params.lr >= 0.0) || !std::isfinite(params.lr)) throw InputError("PGA learning rate must be >= 0");
    if (reference.spec != global.spec) throw InputError("PGA reference does not match the model");

    constexpr std::size_t kFullBatchLimit = 1024;
    constexpr std::size_t kMiniBatch = 256;
    const bool full_batch = forget.size() <= kFullBatchLimit;

    std::vector<std::size_t> order(forget.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Engine eng(params.seed);
    std::size_t cursor = order.size();

    UnlearnOutcome out{global, UnlearnMethod::Pga, {}, 0, 0};
    ParamVector& theta = out.params;
    const Batch all = forget.batch();

    for (std::size_t step = 0; step < params.max_steps; ++step) {
        LossGrad lg;
        if (full_batch) {
            lg = loss_and_grad(theta, all);
            if (lg.loss >= params.stop_loss) break;
        } else {
            if (mean_loss(theta, all) >= params.stop_loss) break;
            if (cursor + kMiniBatch > order.size()) {
                std::shuffle(order.begin(), order.end(), eng);
                cursor = 0;
            }
            const Dataset mb = forget.subset(std::span(order).subspan(cursor, kMiniBatch));
            cursor += kMiniBatch;
            lg = loss_and_grad(theta, mb.batch());
        }

        axpy(params.lr, lg.grad, theta);
        ParamVector offset = theta - reference;
        const double dist = l2_norm(offset.values);
        if (dist > params.radius) {
            theta = reference;
            axpy(params.radius / dist, offset, theta);
        }
        ++out.ascent_steps;
    }

    // One exchange: the model goes to the unlearning party and comes back.
    out.ledger.charge_round(1, global.size());
    out.rounds_used = out.ledger.rounds_executed;
    out.ledger.wall_time = seconds_since(start);
    return out;
}

UnlearnOutcome class_unlearn(const ParamVector& global, std::span<const ClientDataset> clients, int class_label,
                             const FederationConfig& cfg, const UnlearnOptions& options) {
    const auto start = Clock::now();
    auto resolved = resolve_forget(clients, ForgetClass{class_label});
    auto ascent = pga_unlearn(global, resolved.forget, global, default_pga_params(global, cfg, options));
    auto tuned = continue_training(ascent.params, resolved.retain, cfg, ContinueMode::FineTune,
                                   options.finetune_rounds);

    UnlearnOutcome out{std::move(tuned.params), UnlearnMethod::Pga, ascent.ledger, 0, ascent.ascent_steps};
    out.ledger.merge(tuned.ledger);
    out.rounds_used = out.ledger.rounds_executed;
    out.ledger.wall_time = seconds_since(start);
    return out;
}

UnlearnOutcome dispatch(UnlearnMethod method, const FederationState& state, const ForgetSpec& spec,
                        const UnlearnOptions& options) {
    if (method == UnlearnMethod::FedEraser && !std::holds_alternative<ForgetClient>(spec))
        throw CapabilityError("federaser only supports client-level forgetting");

    const auto start = Clock::now();
    auto resolved = resolve_forget(state.clients, spec);
    UnlearnOutcome out;
    switch (method) {
    case UnlearnMethod::Retrain:
        out = retrain(resolved.retain, state.cfg);
        break;
    case UnlearnMethod::FineTune:
        out = continue_training(state.global, resolved.retain, state.cfg, ContinueMode::FineTune,
                                options.finetune_rounds);
        break;
    case UnlearnMethod::ContinueToTrain:
        out = continue_training(state.global, resolved.retain, state.cfg, ContinueMode::C2T, options.c2t_rounds);
        break;
    case UnlearnMethod::FedEraser:
        if (!state.history) throw InputError("federaser needs the training history");
        out = federaser_unlearn(*state.history, resolved.retain, std::get<ForgetClient>(spec).client_id, state.cfg,
                                options.calibration_epochs);
        break;
    case UnlearnMethod::Pga:
        out = pga_unlearn(state.global, resolved.forget, state.global,
                          default_pga_params(state.global, state.cfg, options));
        break;
    }
    out.ledger.wall_time = seconds_since(start);
    return out;
}

} // namespace fu
