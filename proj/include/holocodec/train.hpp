#ifndef HOLOCODEC_TRAIN_HPP
#define HOLOCODEC_TRAIN_HPP

#include "holocodec/codec.hpp"

namespace holocodec {

// Adam with a constant rate and global-norm gradient clipping.
class Adam {
public:
    Adam(double lr, double clip_norm = 5.0) : lr_(lr), clip_(clip_norm) {}

    void step(const std::vector<std::pair<std::string, ag::Var>>& params) {
        double norm2 = 0;
        for (auto& [name, p] : params)
            for (double g : p->grad.data) norm2 += g * g;
        double scale = 1.0;
        if (clip_ > 0 && norm2 > clip_ * clip_) scale = clip_ / std::sqrt(norm2);

        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (auto& [name, p] : params) {
            auto& st = state_[name];
            if (st.m.size() != p->val.size()) {
                st.m.assign(p->val.size(), 0.0);
                st.v.assign(p->val.size(), 0.0);
            }
            for (size_t i = 0; i < p->val.size(); ++i) {
                double g = p->grad[i] * scale;
                st.m[i] = beta1_ * st.m[i] + (1 - beta1_) * g;
                st.v[i] = beta2_ * st.v[i] + (1 - beta2_) * g * g;
                double mhat = st.m[i] / bc1, vhat = st.v[i] / bc2;
                p->val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
            p->grad = Tensor(p->val.shape);
        }
    }

private:
    struct State {
        std::vector<double> m, v;
    };
    double lr_, clip_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    uint64_t t_ = 0;
    std::map<std::string, State> state_;
};

struct TrainResult {
    std::vector<double> stage1_loss;  // per-epoch mean framework loss
    std::vector<double> stage2_loss;
    std::vector<double> utilization_bottom, utilization_top;  // stage-1 per epoch
};

namespace detail {

struct StepGraph {
    ag::Var loss;                 // optimized part
    double monitored_codebook = 0;  // Eq.-4 codebook term (reported, EMA owns the update)
    LatentGrid zb, zt;
    IndexGrid idx_b, idx_t;
};

}  // namespace detail

class Trainer {
public:
    Trainer(CodecModel& model, TrainSchedule schedule) : model_(model), sched_(std::move(schedule)) {
        sched_.validate();
        if (sched_.stage2_sizes.empty()) {
            // powers of two within the adapter range
            for (size_t k = model_.adapter_bottom.k_min; k <= model_.adapter_bottom.k_max; k *= 2)
                if (is_pow2(k)) sched_.stage2_sizes.push_back(k);
            if (sched_.stage2_sizes.empty()) sched_.stage2_sizes.push_back(model_.profile.k_bottom);
        }
        for (size_t k : sched_.stage2_sizes)
            if (k < model_.adapter_bottom.k_min || k > model_.adapter_bottom.k_max ||
                k < model_.adapter_top.k_min || k > model_.adapter_top.k_max)
                throw RangeError("stage-2 size " + std::to_string(k) + " outside the adapter range");
    }

    // Two-stage training. Samples are the precomputed hologram/target pairs.
    TrainResult train(const std::vector<HologramSample>& dataset) {
        if (dataset.empty()) throw ConfigError("train: empty dataset");
        TrainResult result;
        Adam opt(sched_.learning_rate);
        run_stage1(dataset, opt, result);
        if (sched_.stage2_epochs > 0) run_stage2(dataset, opt, sched_.stage2_epochs, result);
        return result;
    }

    // Stage 2 alone (spec's train_adapter); requires a completed stage 1.
    std::vector<double> train_adapter(const std::vector<HologramSample>& dataset, size_t epochs) {
        if (!model_.stage1_done) throw SequencingError("train_adapter: stage 1 has not completed");
        if (dataset.empty()) throw ConfigError("train_adapter: empty dataset");
        TrainResult result;
        Adam opt(sched_.learning_rate);
        if (epochs > 0) run_stage2(dataset, opt, epochs, result);
        return result.stage2_loss;
    }

private:
    CodecModel& model_;
    TrainSchedule sched_;
    std::vector<LatentGrid> reservoir_b_, reservoir_t_;
    size_t reservoir_seen_ = 0;

    void init_books(const std::vector<HologramSample>& dataset) {
        Rng rng(sched_.seed ^ 0xb00c);
        size_t first_batch = std::min(sched_.batch_size, dataset.size());

        std::vector<LatentGrid> zts, zbs;
        for (size_t i = 0; i < first_batch; ++i) {
            auto enc = model_.encode_graph(dataset[i].input3);
            zts.push_back(chw_to_latents(enc.z_t->val));
        }
        seed_book(model_.book_top, zts, rng);

        for (size_t i = 0; i < first_batch; ++i) {
            auto enc = model_.encode_graph(dataset[i].input3);
            auto [idx_t, q_t] = quantize(chw_to_latents(enc.z_t->val), model_.book_top);
            ag::Var dec_top = model_.decode_top_graph(ag::constant(latents_to_chw(q_t)));
            ag::Var z_b = model_.fuse_graph(enc.z_b0, dec_top);
            zbs.push_back(chw_to_latents(z_b->val));
        }
        seed_book(model_.book_bottom, zbs, rng);
        model_.books_initialized = true;
    }

    static void seed_book(Codebook& book, const std::vector<LatentGrid>& grids, Rng& rng) {
        std::vector<const double*> cells;
        for (const auto& g : grids)
            for (size_t i = 0; i < g.cells(); ++i) cells.push_back(g.cell(i));
        std::uniform_int_distribution<size_t> pick(0, cells.size() - 1);
        for (size_t j = 0; j < book.k; ++j) {
            const double* src = cells[pick(rng)];
            std::copy(src, src + book.d, book.row(j));
            book.ema_counts[j] = 0.0;
            std::fill(book.ema_sums.begin() + static_cast<long>(j * book.d),
                      book.ema_sums.begin() + static_cast<long>((j + 1) * book.d), 0.0);
        }
    }

    detail::StepGraph build_stage1_graph(const HologramSample& sample) {
        detail::StepGraph g;
        auto enc = model_.encode_graph(sample.input3);

        g.zt = chw_to_latents(enc.z_t->val);
        auto [idx_t, q_t] = quantize(g.zt, model_.book_top);
        g.idx_t = idx_t;
        ag::Var zt_q = ag::ste_quantize(enc.z_t, book_var(model_.book_top), idx_t, false);

        ag::Var dec_top = model_.decode_top_graph(zt_q);
        ag::Var z_b = model_.fuse_graph(enc.z_b0, dec_top);
        g.zb = chw_to_latents(z_b->val);
        auto [idx_b, q_b] = quantize(g.zb, model_.book_bottom);
        g.idx_b = idx_b;
        ag::Var zb_q = ag::ste_quantize(z_b, book_var(model_.book_bottom), idx_b, false);

        ag::Var phase = model_.decode_graph(zb_q, zt_q);
        ag::Var rec = ag::reconstruction_loss_op(phase, sample.target, model_.optics, model_.weights);

        ag::Var commit_t = cellwise_sq_error(enc.z_t, ag::constant(latents_to_chw(q_t)));
        ag::Var commit_b = cellwise_sq_error(z_b, ag::constant(latents_to_chw(q_b)));
        g.loss = ag::add(rec, ag::scale(ag::add(commit_t, commit_b), sched_.commitment_beta));

        g.monitored_codebook = vq_losses(g.zt, q_t, 0).first + vq_losses(g.zb, q_b, 0).first;
        return g;
    }

    void run_stage1(const std::vector<HologramSample>& dataset, Adam& opt, TrainResult& result) {
        if (!model_.books_initialized && sched_.stage1_epochs > 0) init_books(dataset);
        auto trainables = model_.named_params(false);
        Rng shuffle_rng(sched_.seed ^ 0x5497);

        for (size_t epoch = 0; epoch < sched_.stage1_epochs; ++epoch) {
            std::vector<size_t> order(dataset.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::shuffle(order.begin(), order.end(), shuffle_rng);

            double epoch_loss = 0;
            size_t steps = 0;
            std::vector<IndexGrid> epoch_idx_b, epoch_idx_t;
            for (size_t start = 0; start < order.size(); start += sched_.batch_size) {
                size_t bsz = std::min(sched_.batch_size, order.size() - start);
                std::vector<LatentGrid> batch_zb, batch_zt;
                std::vector<IndexGrid> batch_ib, batch_it;
                double batch_loss = 0;
                for (size_t bi = 0; bi < bsz; ++bi) {
                    const auto& sample = dataset[order[start + bi]];
                    detail::StepGraph g = build_stage1_graph(sample);
                    double step_loss = g.loss->val[0] + g.monitored_codebook;
                    if (!std::isfinite(step_loss))
                        throw NumericError("stage-1 loss non-finite at epoch " + std::to_string(epoch) + ", item " +
                                           std::to_string(start + bi));
                    batch_loss += step_loss;
                    ag::backward(ag::scale(g.loss, 1.0 / static_cast<double>(bsz)));
                    batch_zb.push_back(std::move(g.zb));
                    batch_zt.push_back(std::move(g.zt));
                    batch_ib.push_back(g.idx_b);
                    batch_it.push_back(g.idx_t);
                    epoch_idx_b.push_back(std::move(g.idx_b));
                    epoch_idx_t.push_back(std::move(g.idx_t));
                }
                opt.step(trainables);
                ema_update(model_.book_bottom, concat_latents(batch_zb), concat_indices(batch_ib));
                ema_update(model_.book_top, concat_latents(batch_zt), concat_indices(batch_it));
                feed_reservoir(batch_zb, batch_zt);
                epoch_loss += batch_loss;
                steps += bsz;
            }
            reseed_dead_codes(epoch);
            result.stage1_loss.push_back(epoch_loss / static_cast<double>(steps));
            result.utilization_bottom.push_back(utilization(epoch_idx_b, model_.book_bottom.k));
            result.utilization_top.push_back(utilization(epoch_idx_t, model_.book_top.k));
        }
        model_.stage1_done = true;
    }

    void run_stage2(const std::vector<HologramSample>& dataset, Adam& opt, size_t epochs, TrainResult& result) {
        if (!model_.stage1_done) throw SequencingError("stage 2 before stage 1 completion");
        auto trainables = model_.named_params(true);
        Rng rng(sched_.seed ^ 0x57a6e2);
        std::uniform_int_distribution<size_t> size_pick(0, sched_.stage2_sizes.size() - 1);

        ag::Var base_b = book_var(model_.book_bottom);
        ag::Var base_t = book_var(model_.book_top);

        for (size_t epoch = 0; epoch < epochs; ++epoch) {
            std::vector<size_t> order(dataset.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::shuffle(order.begin(), order.end(), rng);

            double epoch_loss = 0;
            size_t steps = 0;
            for (size_t start = 0; start < order.size(); start += sched_.batch_size) {
                size_t bsz = std::min(sched_.batch_size, order.size() - start);
                size_t kt = sched_.stage2_sizes[size_pick(rng)];
                ag::Var adapted_b = ag::adapt_op(model_.adapter_bottom, base_b, kt);
                ag::Var adapted_t = ag::adapt_op(model_.adapter_top, base_t, kt);
                Codebook ab = materialize(adapted_b, model_.profile.latent_dim);
                Codebook at = materialize(adapted_t, model_.profile.latent_dim);

                ag::Var batch_loss;
                for (size_t bi = 0; bi < bsz; ++bi) {
                    const auto& sample = dataset[order[start + bi]];
                    auto enc = model_.encode_graph(sample.input3);

                    LatentGrid zt = chw_to_latents(enc.z_t->val);
                    auto [idx_t, q_t] = quantize(zt, at);
                    ag::Var zt_q = ag::ste_quantize(enc.z_t, adapted_t, idx_t, true);

                    ag::Var dec_top = model_.decode_top_graph(zt_q);
                    ag::Var z_b = model_.fuse_graph(enc.z_b0, dec_top);
                    LatentGrid zb = chw_to_latents(z_b->val);
                    auto [idx_b, q_b] = quantize(zb, ab);
                    ag::Var zb_q = ag::ste_quantize(z_b, adapted_b, idx_b, true);

                    ag::Var phase = model_.decode_graph(zb_q, zt_q);
                    ag::Var rec = ag::reconstruction_loss_op(phase, sample.target, model_.optics, model_.weights);

                    // codebook terms pull selected adapted rows toward the (stopped) encoder outputs
                    ag::Var cb_t = cellwise_sq_error(ag::constant(latents_to_chw(zt)),
                                                     ag::ste_quantize(ag::constant(enc.z_t->val), adapted_t, idx_t, true));
                    ag::Var cb_b = cellwise_sq_error(ag::constant(latents_to_chw(zb)),
                                                     ag::ste_quantize(ag::constant(z_b->val), adapted_b, idx_b, true));
                    ag::Var commit_t = cellwise_sq_error(enc.z_t, ag::constant(latents_to_chw(q_t)));
                    ag::Var commit_b = cellwise_sq_error(z_b, ag::constant(latents_to_chw(q_b)));

                    ag::Var item = ag::add(rec, ag::add(ag::add(cb_t, cb_b),
                                                        ag::scale(ag::add(commit_t, commit_b), sched_.commitment_beta)));
                    if (!std::isfinite(item->val[0]))
                        throw NumericError("stage-2 loss non-finite at epoch " + std::to_string(epoch) + ", item " +
                                           std::to_string(start + bi));
                    item = ag::scale(item, 1.0 / static_cast<double>(bsz));
                    batch_loss = batch_loss ? ag::add(batch_loss, item) : item;
                }
                epoch_loss += batch_loss->val[0] * bsz;
                steps += bsz;
                ag::backward(batch_loss);
                opt.step(trainables);
            }
            result.stage2_loss.push_back(epoch_loss / static_cast<double>(steps));
        }
    }

    static ag::Var book_var(const Codebook& b) {
        Tensor t({b.k, b.d});
        std::copy(b.vectors.begin(), b.vectors.end(), t.data.begin());
        return ag::constant(std::move(t));
    }

    static Codebook materialize(const ag::Var& rows, size_t d) {
        Codebook b(rows->val.shape[0], d);
        b.vectors = rows->val.data;
        return b;
    }

    static LatentGrid concat_latents(const std::vector<LatentGrid>& grids) {
        size_t cells = 0;
        for (const auto& g : grids) cells += g.cells();
        LatentGrid all(cells, 1, grids[0].d);
        size_t at = 0;
        for (const auto& g : grids) {
            std::copy(g.data.begin(), g.data.end(), all.data.begin() + static_cast<long>(at * g.d));
            at += g.cells();
        }
        return all;
    }

    static IndexGrid concat_indices(const std::vector<IndexGrid>& grids) {
        size_t cells = 0;
        for (const auto& g : grids) cells += g.cells();
        IndexGrid all(cells, 1);
        size_t at = 0;
        for (const auto& g : grids) {
            std::copy(g.data.begin(), g.data.end(), all.data.begin() + static_cast<long>(at));
            at += g.cells();
        }
        return all;
    }

    void feed_reservoir(const std::vector<LatentGrid>& zb, const std::vector<LatentGrid>& zt) {
        // seeded reservoir of encoder outputs for dead-code reseeding
        Rng rng(sched_.seed ^ (0xdead ^ reservoir_seen_));
        auto feed = [&](std::vector<LatentGrid>& res, const std::vector<LatentGrid>& grids) {
            for (const auto& g : grids) {
                for (size_t i = 0; i < g.cells(); i += 7) {  // sparse sampling keeps this cheap
                    LatentGrid one(1, 1, g.d);
                    std::copy(g.cell(i), g.cell(i) + g.d, one.data.begin());
                    if (res.size() < 1024) {
                        res.push_back(std::move(one));
                    } else {
                        std::uniform_int_distribution<size_t> pick(0, res.size() - 1);
                        res[pick(rng)] = std::move(one);
                    }
                }
            }
        };
        feed(reservoir_b_, zb);
        feed(reservoir_t_, zt);
        ++reservoir_seen_;
    }

    void reseed_dead_codes(size_t epoch) {
        Rng rng(sched_.seed ^ (0xc0de ^ epoch));
        auto reseed = [&](Codebook& book, std::vector<LatentGrid>& res) {
            if (res.empty()) return;
            std::uniform_int_distribution<size_t> pick(0, res.size() - 1);
            for (size_t j = 0; j < book.k; ++j) {
                if (book.ema_counts[j] + book.laplace_eps >= 1e-3) continue;
                const LatentGrid& src = res[pick(rng)];
                std::copy(src.data.begin(), src.data.end(), book.row(j));
                book.ema_counts[j] = 1.0;
                std::copy(src.data.begin(), src.data.end(), book.ema_sums.begin() + static_cast<long>(j * book.d));
            }
        };
        reseed(model_.book_bottom, reservoir_b_);
        reseed(model_.book_top, reservoir_t_);
    }
};

}  // namespace holocodec

#endif
