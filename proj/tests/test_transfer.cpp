#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "windtl/transfer.hpp"

using namespace windtl;
using transfer::ReplicaEnsemble;

namespace {

TimeSeriesDataset labeled_farm(const FarmConfig& c, std::size_t n, std::uint64_t seed,
                               std::string_view model = "nwpA", Instant start = synth::default_series_start()) {
    auto truth = synth::generate_nwp_series(c, n, synth::kTruthModelId, seed, start);
    auto obs = synth::generate_power_series(c, truth, {}, seed);
    return synth::attach_power(synth::generate_nwp_series(c, n, model, seed, start), obs);
}

nnet::TrainConfig quick(std::uint64_t seed = 1, std::size_t epochs = 15) {
    nnet::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = seed;
    return cfg;
}

// Per-record mean and population std computed one replica at a time.
void replica_moments(const ReplicaEnsemble& ens, const TimeSeriesDataset& ds, std::vector<double>& mean,
                     std::vector<double>& sd) {
    std::vector<std::vector<double>> p;
    for (const auto& r : ens.replicas) p.push_back(transfer::predict(r, ds));
    mean.assign(ds.size(), 0.0);
    sd.assign(ds.size(), 0.0);
    const double b = static_cast<double>(p.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (const auto& v : p) mean[i] += v[i] / b;
        for (const auto& v : p) sd[i] += (v[i] - mean[i]) * (v[i] - mean[i]) / b;
        sd[i] = std::sqrt(sd[i]);
    }
}

ReplicaEnsemble random_ensemble(std::size_t count, double s_max) {
    ReplicaEnsemble ens;
    ens.model_id = "src";
    ens.s_max = s_max;
    for (std::size_t b = 0; b < count; ++b)
        ens.replicas.push_back(transfer::make_regressor(kModelInputCount, {}, 100 + b));
    return ens;
}

class TransferFixture : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        source_cfg = synth::generate_farm_config(11, Terrain::onshore);
        target_cfg = synth::generate_farm_config(12, Terrain::onshore);
        source = labeled_farm(source_cfg, 2400, 11);
        target = labeled_farm(target_cfg, 1200, 12);
        ensemble = transfer::train_replicas(source, {}, 5, quick());
    }
    static FarmConfig source_cfg, target_cfg;
    static TimeSeriesDataset source, target;
    static ReplicaEnsemble ensemble;
};
FarmConfig TransferFixture::source_cfg, TransferFixture::target_cfg;
TimeSeriesDataset TransferFixture::source, TransferFixture::target;
ReplicaEnsemble TransferFixture::ensemble;

} // namespace

TEST(ChronologicalSplit, TailIsHeldOutInOrder) {
    auto c = synth::generate_farm_config(3, Terrain::farmland);
    auto ds = labeled_farm(c, 100, 3);
    auto [head, tail] = transfer::chronological_split(ds, 0.2);
    EXPECT_EQ(head.size(), 80u);
    EXPECT_EQ(tail.size(), 20u);
    EXPECT_LT(head.timestamps.back(), tail.timestamps.front());
}

TEST(PseudoLabel, RejectsSingleReplica) {
    auto c = synth::generate_farm_config(3, Terrain::farmland);
    auto nwp = synth::generate_nwp_series(c, 50, "nwpA", 3);
    EXPECT_THROW(transfer::pseudo_label(random_ensemble(1, 0.1), nwp), ValidationError);
}

TEST(PseudoLabel, RejectsLabeledTarget) {
    auto c = synth::generate_farm_config(3, Terrain::farmland);
    EXPECT_THROW(transfer::pseudo_label(random_ensemble(3, 0.1), labeled_farm(c, 50, 3)), ValidationError);
}

TEST(PseudoLabel, MatchesReplicaMomentsOracle) {
    auto c = synth::generate_farm_config(4, Terrain::forest);
    auto nwp = synth::generate_nwp_series(c, 300, "nwpB", 4);
    auto ens = random_ensemble(4, 0.05);
    auto pl = transfer::pseudo_label(ens, nwp);
    std::vector<double> mean, sd;
    replica_moments(ens, nwp, mean, sd);
    ASSERT_EQ(pl.base.size(), nwp.size());
    EXPECT_EQ(pl.source_model_id, "src");
    for (std::size_t i = 0; i < nwp.size(); ++i) {
        EXPECT_NEAR(*pl.base.power[i], mean[i], 1e-12);
        EXPECT_NEAR(pl.confidence[i], 1.0 - std::min(1.0, sd[i] / 0.05), 1e-12);
    }
}

TEST(PseudoLabel, ConfidenceIsBoundedAndAntiMonotoneInSpread) {
    auto c = synth::generate_farm_config(5, Terrain::mountain);
    auto nwp = synth::generate_nwp_series(c, 500, "nwpA", 5);
    auto ens = random_ensemble(5, 0.2);
    auto pl = transfer::pseudo_label(ens, nwp);
    std::vector<double> mean, sd;
    replica_moments(ens, nwp, mean, sd);
    std::vector<std::size_t> order(nwp.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return sd[a] < sd[b]; });
    for (std::size_t k = 0; k < order.size(); ++k) {
        double conf = pl.confidence[order[k]];
        EXPECT_GE(conf, 0.0);
        EXPECT_LE(conf, 1.0);
        if (k > 0) EXPECT_LE(conf, pl.confidence[order[k - 1]] + 1e-12);
    }
}

TEST(PseudoLabel, IdenticalReplicasGiveFullConfidence) {
    auto ens = random_ensemble(1, 0.1);
    ens.replicas.push_back(ens.replicas.front());
    auto c = synth::generate_farm_config(6, Terrain::onshore);
    auto pl = transfer::pseudo_label(ens, synth::generate_nwp_series(c, 40, "nwpA", 6));
    for (double v : pl.confidence) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Wp1Naive, ZeroConfidenceEverywhereIsAnError) {
    auto ens = random_ensemble(3, 1e-12);
    auto c = synth::generate_farm_config(7, Terrain::onshore);
    auto nwp = synth::generate_nwp_series(c, 100, "nwpA", 7);
    preselect::SimilarityRanking ranking{"t", {{"src", 0.1, true}}};
    std::map<std::string, ReplicaEnsemble> models{{"src", ens}};
    try {
        transfer::train_wp1_naive(ranking, models, nwp, {}, quick());
        FAIL() << "expected TrainingError";
    } catch (const nnet::TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("no usable pseudo-labels"), std::string::npos);
    }
}

TEST(Wp1Naive, RequiresModelForRankOneSource) {
    auto c = synth::generate_farm_config(7, Terrain::onshore);
    auto nwp = synth::generate_nwp_series(c, 100, "nwpA", 7);
    preselect::SimilarityRanking ranking{"t", {{"missing", 0.1, true}}};
    std::map<std::string, ReplicaEnsemble> models{{"src", random_ensemble(2, 0.1)}};
    EXPECT_THROW(transfer::train_wp1_naive(ranking, models, nwp, {}, quick()), ValidationError);
    preselect::SimilarityRanking empty{"t", {}};
    EXPECT_THROW(transfer::train_wp1_naive(empty, models, nwp, {}, quick()), ValidationError);
}

TEST_F(TransferFixture, CalibrationIsNinetyFifthPercentileOfValidationSpread) {
    auto [head, tail] = transfer::chronological_split(source, 0.2);
    std::vector<double> mean, sd;
    replica_moments(ensemble, tail, mean, sd);
    std::sort(sd.begin(), sd.end());
    double pos = 0.95 * static_cast<double>(sd.size() - 1);
    auto lo = static_cast<std::size_t>(pos);
    double expected = sd[lo] + (pos - static_cast<double>(lo)) * (sd[lo + 1] - sd[lo]);
    EXPECT_NEAR(ensemble.s_max, expected, 1e-12);
    EXPECT_EQ(ensemble.replicas.size(), 5u);
    EXPECT_EQ(ensemble.model_id, source.farm_id);
}

TEST_F(TransferFixture, ReplicasDiffer) {
    EXPECT_FALSE(nnet::same_weights(ensemble.replicas[0], ensemble.replicas[1]));
}

TEST_F(TransferFixture, Wp1NaiveBeatsClimatology) {
    preselect::SimilarityRanking ranking{target.farm_id, {{source.farm_id, 0.0, true}}};
    std::map<std::string, ReplicaEnsemble> models{{source.farm_id, ensemble}};
    auto net = transfer::train_wp1_naive(ranking, models, without_power(target), {}, quick(2));
    auto p = transfer::predict(net, target);
    double model_rmse = metrics::rmse(p, target.power);
    double mean = 0.0;
    for (const auto& v : source.power) mean += *v / static_cast<double>(source.size());
    std::vector<double> flat(target.size(), mean);
    EXPECT_LT(model_rmse, 0.7 * metrics::rmse(flat, target.power));
}

TEST_F(TransferFixture, UniversalModelRequiresTwoSources) {
    std::vector<TimeSeriesDataset> one{source};
    EXPECT_THROW(transfer::train_universal(one, 4, quick()), ValidationError);
}

TEST_F(TransferFixture, UniversalModelPredictsInRange) {
    auto other = labeled_farm(synth::generate_farm_config(13, Terrain::onshore), 1500, 13);
    std::vector<TimeSeriesDataset> sources{source, other};
    auto m = transfer::train_universal(sources, 4, quick(3));
    EXPECT_TRUE(std::isfinite(m.reconstruction_mse));
    EXPECT_EQ(m.encoder.output_dim(), 4u);
    EXPECT_EQ(m.regressor.input_dim(), 4u);
    auto p = transfer::predict(m, target);
    double mean = 0.0;
    for (const auto& v : source.power) mean += *v / static_cast<double>(source.size());
    std::vector<double> flat(target.size(), mean);
    for (double v : p) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_LT(metrics::rmse(p, target.power), metrics::rmse(flat, target.power));
}

TEST_F(TransferFixture, SelfTrainNeverWorseThanLabeledOnlyOnGuard) {
    auto base = transfer::make_regressor(kModelInputCount, {}, 9);
    auto labeled = slice(target, target.timestamps.front(), target.timestamps.front() + Hours{168});
    auto unlabeled = without_power(slice(target, target.timestamps.front() + Hours{168}, target.timestamps.back()));
    transfer::SelfTrainOptions opts;
    opts.conf_threshold = 0.5;
    opts.max_rounds = 2;
    opts.replicas = 3;
    auto r = transfer::self_train(base, labeled, unlabeled, quick(4), opts);
    EXPECT_LE(r.final_rmse, r.labeled_only_rmse);
    auto [fit, guard] = transfer::chronological_split(labeled, opts.holdout_fraction);
    EXPECT_NEAR(transfer::dataset_rmse(r.model, guard), r.final_rmse, 1e-12);
}

TEST_F(TransferFixture, SelfTrainWithNothingAdmittedReturnsLabeledOnlyModel) {
    auto base = transfer::make_regressor(kModelInputCount, {}, 9);
    auto labeled = slice(target, target.timestamps.front(), target.timestamps.front() + Hours{168});
    auto unlabeled = without_power(slice(target, target.timestamps.front() + Hours{168}, target.timestamps.back()));
    transfer::SelfTrainOptions opts;
    opts.conf_threshold = 1.0;
    opts.replicas = 2;
    auto cfg = quick(5);
    auto r = transfer::self_train(base, labeled, unlabeled, cfg, opts);
    EXPECT_EQ(r.admitted, 0u);

    auto [fit, guard] = transfer::chronological_split(labeled, opts.holdout_fraction);
    auto samples = nnet::labeled_samples(fit);
    auto start = base;
    start.input_scaling = nnet::Standardizer::fit(samples.inputs);
    auto expected = nnet::finetune(start, samples, std::vector<bool>(base.layer_count(), false), cfg);
    EXPECT_TRUE(nnet::same_weights(r.model, expected));
    EXPECT_DOUBLE_EQ(r.final_rmse, r.labeled_only_rmse);
}

TEST(SelfTrain, RejectsBadInput) {
    auto c = synth::generate_farm_config(8, Terrain::onshore);
    auto ds = labeled_farm(c, 200, 8);
    auto base = transfer::make_regressor(kModelInputCount, {}, 1);
    EXPECT_THROW(transfer::self_train(base, without_power(ds), without_power(ds), quick()), ValidationError);
    transfer::SelfTrainOptions bad;
    bad.conf_threshold = 0.0;
    EXPECT_THROW(transfer::self_train(base, ds, without_power(ds), quick(), bad), ValidationError);
}
