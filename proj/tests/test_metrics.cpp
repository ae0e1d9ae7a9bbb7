#include "lrw/metrics.hpp"
#include "lrw/simnet.hpp"

#include "gen.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

using namespace lrw;

namespace {

OpRecord op(Outcome o, std::uint64_t series = 0, double dur = 10.0)
{
    OpRecord r;
    r.outcome = o;
    r.series = series;
    r.optimistic_duration_ms = dur;
    return r;
}

std::vector<OpRecord> random_ops(gen::Source& g)
{
    std::vector<OpRecord> ops;
    const auto n = g.range(1, 60);
    const auto series = g.range(1, 10);
    for (std::int64_t i = 0; i < n; ++i) {
        const double u = g.unit();
        const Outcome o = u < 0.2 ? Outcome::Failed : u < 0.4 ? Outcome::Canceled : Outcome::Success;
        ops.push_back(op(o, static_cast<std::uint64_t>(g.range(0, series - 1)), g.unit() * 300.0));
    }
    return ops;
}

TraceRecord rec(std::int64_t t_us, std::uint32_t node, RecordKind kind, std::uint32_t init, OpId opid,
                std::string label = {})
{
    return TraceRecord{Micros{t_us}, NodeId{node}, kind, NodeId{init}, opid, std::move(label), std::nullopt, 0, 0, 0};
}

} // namespace

TEST(Reliability, MixedOutcomes)
{
    EXPECT_DOUBLE_EQ(reliability({op(Outcome::Success), op(Outcome::Canceled), op(Outcome::Failed), op(Outcome::Success)}),
                     75.0);
}

TEST(Reliability, AllSuccess)
{
    EXPECT_DOUBLE_EQ(reliability({op(Outcome::Success), op(Outcome::Success)}), 100.0);
}

TEST(Reliability, EmptyInput)
{
    try {
        reliability({});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
    }
    EXPECT_THROW(series_reliability({}), Error);
}

TEST(SeriesReliability, OneFailedSeriesOfTwo)
{
    auto s = group_series({op(Outcome::Success, 0), op(Outcome::Success, 0), op(Outcome::Success, 1),
                           op(Outcome::Failed, 1)});
    ASSERT_EQ(s.size(), 2u);
    EXPECT_FALSE(s[0].failed);
    EXPECT_TRUE(s[1].failed);
    EXPECT_DOUBLE_EQ(series_reliability(s), 50.0);
}

TEST(SeriesReliability, DurationIsMaxOverOps)
{
    auto s = group_series({op(Outcome::Success, 3, 12.0), op(Outcome::Canceled, 3, 40.0), op(Outcome::Success, 3, 7.0)});
    ASSERT_EQ(s.size(), 1u);
    EXPECT_DOUBLE_EQ(s[0].duration_ms, 40.0);
}

TEST(MetricsProperty, SeriesReliabilityNeverExceedsOpReliability)
{
    gen::for_all(51, 500, [](gen::Source& g, int) {
        auto ops = random_ops(g);
        ASSERT_LE(series_reliability(group_series(ops)), reliability(ops) + 1e-12);
    });
}

TEST(MetricsProperty, ReliabilityScaleInvariantUnderDuplication)
{
    gen::for_all(52, 300, [](gen::Source& g, int) {
        auto ops = random_ops(g);
        auto twice = ops;
        // duplicated series get fresh ids so the series structure is copied, not merged
        for (auto o : ops) {
            o.series += 1000;
            twice.push_back(o);
        }
        ASSERT_NEAR(reliability(ops), reliability(twice), 1e-9);
        ASSERT_NEAR(series_reliability(group_series(ops)), series_reliability(group_series(twice)), 1e-9);
    });
}

TEST(Histogram, SingleOpAt35InWidth20)
{
    auto bins = duration_histogram(std::vector<double>{35.0}, 20.0);
    ASSERT_EQ(bins.size(), 2u);
    EXPECT_DOUBLE_EQ(bins[0].pct, 0.0);
    EXPECT_DOUBLE_EQ(bins[1].lo_ms, 20.0);
    EXPECT_DOUBLE_EQ(bins[1].hi_ms, 40.0);
    EXPECT_DOUBLE_EQ(bins[1].pct, 100.0);
}

TEST(Histogram, BinsAreHalfOpen)
{
    auto bins = duration_histogram(std::vector<double>{20.0, 19.999}, 20.0);
    ASSERT_EQ(bins.size(), 2u);
    EXPECT_DOUBLE_EQ(bins[0].pct, 50.0);
    EXPECT_DOUBLE_EQ(bins[1].pct, 50.0);
}

TEST(Histogram, NonPositiveWidthRejected)
{
    EXPECT_THROW(duration_histogram(std::vector<double>{1.0}, 0.0), Error);
    EXPECT_THROW(duration_histogram(std::vector<double>{1.0}, -5.0), Error);
}

TEST(MetricsProperty, HistogramMassIsConserved)
{
    gen::for_all(53, 300, [](gen::Source& g, int) {
        std::vector<double> d;
        for (auto n = g.range(1, 500); n > 0; --n)
            d.push_back(g.unit() * 400.0);
        const double w = 1.0 + g.unit() * 30.0;
        double total = 0.0;
        for (const auto& b : duration_histogram(d, w))
            total += b.pct;
        ASSERT_NEAR(total, 100.0, 1e-9);
    });
}

TEST(Modes, TwoSeparatedPeaks)
{
    std::vector<double> d;
    for (int i = 0; i < 60; ++i)
        d.push_back(25.0);
    for (double x : {45.0, 65.0, 85.0})
        for (int i = 0; i < 10; ++i)
            d.push_back(x);
    for (int i = 0; i < 30; ++i)
        d.push_back(105.0);
    auto modes = find_modes(duration_histogram(d, 20.0), 5.0);
    ASSERT_EQ(modes.size(), 2u);
    EXPECT_DOUBLE_EQ(modes[0].center_ms, 30.0);
    EXPECT_DOUBLE_EQ(modes[1].center_ms, 110.0);
    EXPECT_NEAR(modes[1].prominence, 25.0 - 100.0 / 12.0, 1e-9); // 25% peak over an 8.3% plateau
}

TEST(Modes, ShoulderBelowProminenceIgnored)
{
    std::vector<HistogramBin> bins{{0, 10, 10}, {10, 20, 50}, {20, 30, 18}, {30, 40, 20}, {40, 50, 2}};
    EXPECT_EQ(find_modes(bins, 5.0).size(), 1u);
    EXPECT_EQ(find_modes(bins, 0.0).size(), 2u);
}

TEST(MeanCi, ConstantSamples)
{
    auto ci = mean_ci95({10, 10, 10});
    EXPECT_DOUBLE_EQ(ci.mean, 10.0);
    EXPECT_DOUBLE_EQ(ci.half_width, 0.0);
}

TEST(MeanCi, TooFewSamples)
{
    try {
        mean_ci95({1.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooFewSamples);
    }
}

// 100 standard-normal draws: half-width close to 1.96 / sqrt(100).
TEST(MeanCi, StandardNormalHalfWidth)
{
    std::mt19937_64 eng(2024);
    std::normal_distribution<double> n01;
    std::vector<double> x(100);
    for (auto& v : x)
        v = n01(eng);
    const auto ci = mean_ci95(x);
    EXPECT_NEAR(ci.half_width, 0.196, 0.196 * 0.15);
}

TEST(MeanCi, MatchesHandComputation)
{
    const std::vector<double> x{2, 4, 4, 4, 5, 5, 7, 9};
    // mean 5, sample variance 32/7
    const auto ci = mean_ci95(x);
    EXPECT_DOUBLE_EQ(ci.mean, 5.0);
    EXPECT_NEAR(ci.half_width, 1.96 * std::sqrt(32.0 / 7.0) / std::sqrt(8.0), 1e-12);
}

TEST(AuditConsistency, LosslessTrialsHaveNoDivergence)
{
    ScenarioConfig cfg;
    cfg.topology = TopologySpec{TopologyKind::Line31, 31, 3, {}};
    cfg.initiators.select = InitiatorSelect::EverySixth;
    cfg.trials = 50;
    const auto rep = audit_consistency(run_scenario(cfg));
    EXPECT_TRUE(rep.divergences.empty());
    EXPECT_TRUE(rep.violations.empty());
}

// Neighbor 2's replies never arrive, so the initiator aborts; the AbortMsg to
// neighbor 1 is lost while neighbor 2 discards. Neighbor 1 commits alone.
TEST(AuditConsistency, LostAbortGivesFailedDivergence)
{
    ScenarioConfig cfg;
    cfg.topology = TopologySpec{TopologyKind::Star, 2, 3, {}};
    cfg.initiators.select = InitiatorSelect::Center;
    cfg.drop_filter = [](std::size_t, NodeId from, NodeId to, const Message& m) {
        if (from == NodeId{2} && to == NodeId{0})
            return true;
        return m.kind == MsgKind::AbortMsg && to == NodeId{1};
    };
    const Trace t = run_scenario(cfg);
    const auto ops = extract_ops(t);
    ASSERT_EQ(ops.size(), 1u);
    EXPECT_EQ(ops[0].outcome, Outcome::Failed);
    const auto rep = audit_consistency(t);
    ASSERT_EQ(rep.divergences.size(), 1u);
    EXPECT_EQ(rep.divergences[0].outcome, Outcome::Failed);
    EXPECT_EQ(rep.divergences[0].committed, std::vector<NodeId>{NodeId{1}});
    EXPECT_TRUE(rep.violations.empty());
}

TEST(AuditConsistency, CommitUnderCanceledIsViolation)
{
    Trace t;
    t.add(rec(0, 0, RecordKind::Invoke, 0, 1));
    t.add(rec(10, 1, RecordKind::TimerStart, 0, 1, "Commit"));
    t.add(rec(50, 0, RecordKind::Return, 0, 1, "Canceled"));
    t.add(rec(200, 1, RecordKind::Commit, 0, 1));
    EXPECT_FALSE(audit_consistency(t).violations.empty());
}

TEST(AuditConsistency, MissingReturnIsViolation)
{
    Trace t;
    t.add(rec(0, 0, RecordKind::Invoke, 0, 1));
    EXPECT_FALSE(audit_consistency(t).violations.empty());
}

TEST(AuditSingleEngagement, OverlapDetected)
{
    Trace t;
    t.add(rec(0, 5, RecordKind::TimerStart, 1, 1, "Commit"));
    t.add(rec(10, 5, RecordKind::TimerStart, 7, 2, "Commit"));
    t.add(rec(100, 5, RecordKind::Commit, 1, 1));
    t.add(rec(120, 5, RecordKind::Commit, 7, 2));
    EXPECT_EQ(audit_single_engagement(t).size(), 1u);
    EXPECT_EQ(audit_serializability(t).size(), 1u);
}

TEST(AuditSingleEngagement, BackToBackIsFine)
{
    Trace t;
    t.add(rec(0, 5, RecordKind::TimerStart, 1, 1, "Commit"));
    t.add(rec(100, 5, RecordKind::Commit, 1, 1));
    t.add(rec(100, 5, RecordKind::TimerStart, 7, 2, "Commit"));
    t.add(rec(150, 5, RecordKind::Discard, 7, 2));
    EXPECT_TRUE(audit_single_engagement(t).empty());
}

TEST(AuditSingleEngagement, ContentionScenarioClean)
{
    ScenarioConfig cfg;
    cfg.topology = TopologySpec{TopologyKind::Line31, 31, 3, Churn{0.8, 0.0}};
    cfg.initiators.select = InitiatorSelect::EverySixth;
    cfg.radio.loss_prob = 0.06;
    cfg.trials = 200;
    cfg.seed = 77;
    const Trace t = run_scenario(cfg);
    EXPECT_TRUE(audit_single_engagement(t).empty());
    EXPECT_TRUE(audit_serializability(t).empty());
}

// Outcome semantics over random lossy runs: divergence only under Failed,
// and no Success/Canceled violations.
TEST(MetricsProperty, ConsistencyAuditCleanOnRandomRuns)
{
    gen::for_all(54, 30, [](gen::Source& g, int) {
        ScenarioConfig cfg;
        cfg.topology = g.coin() ? TopologySpec{TopologyKind::Star, static_cast<std::size_t>(g.range(1, 7)), 3, {}}
                                : TopologySpec{TopologyKind::Line31, 31, 3, Churn{0.8, 0.0}};
        cfg.initiators.select =
            cfg.topology.kind == TopologyKind::Star ? InitiatorSelect::Center : InitiatorSelect::EverySixth;
        cfg.radio.loss_prob = g.unit() * 0.5;
        cfg.trials = 40;
        cfg.seed = static_cast<std::uint64_t>(g.range(0, 1 << 20));
        const Trace t = run_scenario(cfg);
        const auto rep = audit_consistency(t);
        ASSERT_TRUE(rep.violations.empty()) << rep.violations.front().what;
        for (const auto& d : rep.divergences)
            ASSERT_EQ(d.outcome, Outcome::Failed);
        for (const auto& o : extract_ops(t))
            ASSERT_LE(o.optimistic_duration_ms, to_ms(o.return_time - o.invoke_time) + 1e-9);
    });
}

TEST(ExtractOps, DurationAndBroadcastCount)
{
    ScenarioConfig cfg;
    cfg.topology = TopologySpec{TopologyKind::Star, 3, 3, {}};
    cfg.initiators.select = InitiatorSelect::Center;
    // lose neighbor 3's first accept only
    auto dropped = std::make_shared<bool>(false);
    cfg.drop_filter = [dropped](std::size_t, NodeId from, NodeId, const Message& m) {
        if (from == NodeId{3} && m.kind == MsgKind::AcceptMsg && !*dropped)
            return *dropped = true;
        return false;
    };
    const auto ops = extract_ops(run_scenario(cfg));
    ASSERT_EQ(ops.size(), 1u);
    EXPECT_EQ(ops[0].outcome, Outcome::Success);
    EXPECT_EQ(ops[0].init_transmissions, 2u);
    EXPECT_EQ(ops[0].last_invited, 1u);
    EXPECT_EQ(ops[0].neighbors_at_invoke, 3u);
    EXPECT_GT(ops[0].optimistic_duration_ms, 40.0);
    EXPECT_NEAR(ops[0].last_round_ms, ops[0].optimistic_duration_ms - 40.0, 1e-9);
}

TEST(Csv, ReliabilityFormat)
{
    std::ostringstream os;
    write_reliability_csv(os, {{50, 46.64, 46.64}, {-1, 100, 100}});
    EXPECT_EQ(os.str(), "timeout_ms,op_reliability_pct,series_reliability_pct\n50,46.64,46.64\ninf,100.00,100.00\n");
}

TEST(Csv, DurationsFormat)
{
    OpRecord o = op(Outcome::Canceled, 0, 12.3456);
    o.op_id = 4;
    std::ostringstream os;
    write_durations_csv(os, {o});
    EXPECT_EQ(os.str(), "op_id,outcome,duration_ms\n4,Canceled,12.346\n");
}

TEST(Csv, HistogramFormat)
{
    std::ostringstream os;
    write_histogram_csv(os, {{20, 40, 100}});
    EXPECT_EQ(os.str(), "bin_lo_ms,bin_hi_ms,pct\n20.0,40.0,100.0000\n");
}
