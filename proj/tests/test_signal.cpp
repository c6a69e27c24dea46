#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "ffeq/signal.hpp"

using namespace ffeq;

namespace {

std::size_t period_of(const Bits& b)
{
    for (std::size_t p = 1; p < b.size(); ++p) {
        bool ok = true;
        for (std::size_t i = 0; i + p < b.size() && ok; ++i)
            ok = b[i] == b[i + p];
        if (ok)
            return p;
    }
    return 0;
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n)
{
    std::normal_distribution<double> d;
    std::vector<double> v(n);
    for (auto& x : v)
        x = d(rng);
    return v;
}

} // namespace

TEST(Prbs, Order3HasPeriod7)
{
    for (std::uint64_t seed = 1; seed < 8; ++seed)
        EXPECT_EQ(period_of(prbs(3, 70, seed)), 7u) << seed;
}

TEST(Prbs, Order7WindowsEachAppearOnce)
{
    const auto b = prbs(7, 127 + 6, 0x7f);
    std::map<unsigned, int> count;
    for (std::size_t i = 0; i < 127; ++i) {
        unsigned w = 0;
        for (std::size_t j = 0; j < 7; ++j)
            w = (w << 1) | b[i + j];
        ++count[w];
    }
    EXPECT_EQ(count.size(), 127u);
    EXPECT_EQ(count.count(0u), 0u);
    for (const auto& [w, c] : count)
        EXPECT_EQ(c, 1) << w;
}

TEST(Prbs, Order7FirstBitsFromAllOnesSeed)
{
    // x^7 + x^6 + 1: the feedback is s7 xor s6, shifted in at the low end.
    // From 1111111 the first six outputs are 0, then the zeros reach stage 6.
    const auto b = prbs(7, 8, 0x7f);
    const Bits expected{0, 0, 0, 0, 0, 0, 1, 0};
    EXPECT_EQ(b, expected);
}

TEST(Prbs, MaximalPeriodForTabulatedOrders)
{
    for (int order = 3; order <= 20; ++order) {
        Lfsr lfsr(order, 1);
        const std::uint64_t start = lfsr.state();
        const std::uint64_t expected = (std::uint64_t{1} << order) - 1;
        std::uint64_t steps = 0;
        do {
            lfsr.next();
            ++steps;
        } while (lfsr.state() != start && steps <= expected);
        EXPECT_EQ(steps, expected) << "order " << order;
    }
}

TEST(Prbs, BalancedOnesPerPeriod)
{
    const auto b = prbs(7, 127, 1);
    std::size_t ones = 0;
    for (auto x : b)
        ones += x;
    EXPECT_EQ(ones, 64u);
}

TEST(Prbs, DeterministicAndRejectsBadArguments)
{
    EXPECT_EQ(prbs(15, 1000, 42), prbs(15, 1000, 42));
    EXPECT_NE(prbs(15, 1000, 42), prbs(15, 1000, 43));
    try {
        prbs(7, 10, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateSeed);
    }
    // a seed whose low `order` bits are zero is also degenerate
    EXPECT_THROW(prbs(7, 10, 0x80), Error);
    EXPECT_THROW(prbs(2, 10, 1), Error);
    EXPECT_THROW(prbs(32, 10, 1), Error);
}

TEST(Nrz, LevelsAndEdges)
{
    const auto rate = DataRateSettings::from_clock(1e9, 8);
    const Bits ones{1, 1, 1, 1};
    for (double v : nrz(ones, rate, 0.8, 0.1e-9).samples)
        EXPECT_DOUBLE_EQ(v, 0.4);

    const Bits alt{0, 1, 0, 1};
    const auto w = nrz(alt, rate, 1.0, 0.0);
    ASSERT_EQ(w.size(), 32u);
    EXPECT_DOUBLE_EQ(w.dt, rate.ui / 8);
    for (std::size_t i = 0; i < w.size(); ++i)
        EXPECT_DOUBLE_EQ(w.samples[i], (i / 8) % 2 ? 0.5 : -0.5);

    // linear ramp: rise of 4 samples at 16 samples per UI
    const auto fine = DataRateSettings::from_clock(1e9, 16);
    const auto r = nrz(Bits{0, 1}, fine, 1.0, 4 * fine.dt());
    EXPECT_DOUBLE_EQ(r.samples[16], -0.5);
    EXPECT_DOUBLE_EQ(r.samples[17], -0.25);
    EXPECT_DOUBLE_EQ(r.samples[18], 0.0);
    EXPECT_DOUBLE_EQ(r.samples[20], 0.5);
}

TEST(Nrz, Prbs7MeanIsSmall)
{
    const auto rate = DataRateSettings::from_clock(1e9, 16);
    const auto w = nrz(prbs(7, 127, 1), rate, 1.0, 0.0);
    double mean = 0.0;
    for (double v : w.samples)
        mean += v;
    mean /= double(w.size());
    EXPECT_LT(std::abs(mean), 1.0 / 127.0);
}

TEST(Nrz, RejectsSlowEdgesAndEmptyInput)
{
    const auto rate = DataRateSettings::from_clock(1e9, 8);
    try {
        nrz(Bits{1, 0}, rate, 1.0, rate.ui / 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EdgeRate);
    }
    EXPECT_THROW(nrz(Bits{}, rate, 1.0, 0.0), Error);
}

TEST(Convolve, IdentityAndShift)
{
    std::mt19937_64 rng(5);
    const Waveform x{0.0, 1e-12, random_vector(rng, 40)};
    const Waveform delta{0.0, 1e-12, {1.0}};
    EXPECT_EQ(convolve(x, delta).samples, x.samples);

    Waveform shifted{0.0, 1e-12, std::vector<double>(6, 0.0)};
    shifted.samples[5] = 1.0;
    const auto y = convolve(x, shifted);
    ASSERT_EQ(y.size(), x.size() + 5);
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_EQ(y.samples[i + 5], x.samples[i]);
}

TEST(Convolve, MatchesBruteForceSum)
{
    std::mt19937_64 rng(11);
    for (auto [nx, nh] : {std::pair{50u, 20u}, std::pair{5000u, 300u}, std::pair{20000u, 2048u}}) {
        const auto x = random_vector(rng, nx);
        const auto h = random_vector(rng, nh);
        const auto y = convolve(Waveform{1e-9, 1e-12, x}, Waveform{2e-9, 1e-12, h});
        ASSERT_EQ(y.size(), nx + nh - 1);
        EXPECT_DOUBLE_EQ(y.t0, 3e-9);
        for (std::size_t n = 0; n < y.size(); n += (nx > 1000 ? 37 : 1)) {
            double acc = 0.0;
            for (std::size_t j = 0; j < nh; ++j)
                if (n >= j && n - j < nx)
                    acc += h[j] * x[n - j];
            EXPECT_NEAR(y.samples[n], acc, 1e-9) << n;
        }
    }
}

TEST(Convolve, CommutativeLinearAndBounded)
{
    std::mt19937_64 rng(3);
    const Waveform a{0.0, 1e-12, random_vector(rng, 3000)};
    const Waveform b{0.0, 1e-12, random_vector(rng, 200)};
    const Waveform c{0.0, 1e-12, random_vector(rng, 200)};
    const auto ab = convolve(a, b);
    const auto ba = convolve(b, a);
    Waveform bc = b;
    for (std::size_t i = 0; i < bc.size(); ++i)
        bc.samples[i] = 2.0 * b.samples[i] - 0.5 * c.samples[i];
    const auto lhs = convolve(a, bc);
    const auto ac = convolve(a, c);
    double l1 = 0.0, l2h = 0.0, l2y = 0.0;
    for (double v : a.samples)
        l1 += std::abs(v);
    for (double v : b.samples)
        l2h += v * v;
    for (std::size_t i = 0; i < ab.size(); ++i) {
        EXPECT_NEAR(ab.samples[i], ba.samples[i], 1e-9);
        EXPECT_NEAR(lhs.samples[i], 2.0 * ab.samples[i] - 0.5 * ac.samples[i], 1e-9);
        l2y += ab.samples[i] * ab.samples[i];
    }
    EXPECT_LE(std::sqrt(l2y), l1 * std::sqrt(l2h));
}

TEST(Convolve, RejectsMismatchedSteps)
{
    try {
        convolve(Waveform{0.0, 1e-12, {1.0}}, Waveform{0.0, 2e-12, {1.0}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Grid);
    }
}
