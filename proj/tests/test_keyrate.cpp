#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "dprqkd/channel.hpp"
#include "dprqkd/keyrate.hpp"

using namespace dprqkd;

TEST_CASE("binary entropy reference values") {
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  CHECK(binary_entropy(0.5) == doctest::Approx(1.0).epsilon(1e-12));
  // Direct evaluation: -0.11 log2 0.11 - 0.89 log2 0.89.
  const double oracle = -0.11 * std::log2(0.11) - 0.89 * std::log2(0.89);
  CHECK(oracle == doctest::Approx(0.4999174).epsilon(1e-6));
  CHECK(binary_entropy(0.11) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK_THROWS_AS(binary_entropy(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(binary_entropy(1.1), std::invalid_argument);
}

TEST_CASE("binary entropy is symmetric and concave") {
  for (int i = 1; i < 1000; ++i) {
    const double p = i / 1000.0;
    CHECK(binary_entropy(p) ==
          doctest::Approx(binary_entropy(1.0 - p)).epsilon(1e-12));
  }
  for (int i = 1; i < 999; ++i) {
    const double p = i / 1000.0;
    const double mid = binary_entropy(p);
    const double chord =
        0.5 * (binary_entropy(p - 1e-3) + binary_entropy(p + 1e-3));
    CHECK(mid >= chord - 1e-12);
  }
}

TEST_CASE("beam-splitting information leak") {
  for (ProtocolId proto : {ProtocolId::Dpts, ProtocolId::Dps, ProtocolId::Cow})
    CHECK(eve_info_bs(proto, 0.3, 1.0, 0.98) == doctest::Approx(0.0));

  // t -> 0 with mu = 0.26 (pair mean 0.52): 1 - e^{-0.52}.
  CHECK(eve_info_bs(ProtocolId::Dpts, 0.26, 1e-12, 0.98) ==
        doctest::Approx(0.4054795).epsilon(1e-6));
  CHECK(eve_info_bs(ProtocolId::Cow, 0.52, 1e-12, 0.98) ==
        doctest::Approx(0.4054795).epsilon(1e-6));
  CHECK(eve_info_bs(ProtocolId::Dps, 1e-9, 0.5, 0.98) ==
        doctest::Approx(0.0).scale(1.0));

  double prev = 2.0;
  for (double t = 0.05; t <= 1.0; t += 0.05) {
    const double info = eve_info_bs(ProtocolId::Dps, 0.13, t, 0.98);
    CHECK(info < prev);
    prev = info;
  }
  prev = -1.0;
  for (double mu = 0.05; mu <= 1.0; mu += 0.05) {
    const double info = eve_info_bs(ProtocolId::Cow, mu, 0.3, 0.98);
    CHECK(info > prev);
    prev = info;
  }
  CHECK_THROWS_AS(eve_info_bs(ProtocolId::Bb84Decoy, 0.25, 0.5, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(eve_info_bs(ProtocolId::Dps, 0.13, 0.0, 1.0),
                  std::invalid_argument);
}

TEST_CASE("predict_rates basic structure") {
  const DetectorSpec det;
  for (ProtocolId proto : {ProtocolId::Dpts, ProtocolId::Dps, ProtocolId::Cow}) {
    const SystemParams p = default_params(proto);
    for (double loss : {3.0, 7.0, 11.0, 25.0, 40.0}) {
      const RateReport rep = predict_rates(proto, p, ChannelSpec::loss(loss), det);
      CHECK(rep.r_sk_bps >= 0.0);
      CHECK(rep.r_sk_bps <= rep.r_sift_hz * (1 + 1e-12));
      CHECK(rep.i_ab >= 0.0);
      CHECK(rep.i_ab <= 1.0);
      CHECK(rep.i_ae >= 0.0);
      CHECK(rep.i_ae <= 1.0);
      CHECK(rep.bound_valid == (loss >= 5.0));
    }
  }
}

TEST_CASE("dark counts dominate at extreme loss") {
  const DetectorSpec det;
  for (ProtocolId proto : {ProtocolId::Dpts, ProtocolId::Dps, ProtocolId::Cow}) {
    const RateReport rep = predict_rates(proto, default_params(proto),
                                         ChannelSpec::loss(80.0), det);
    CHECK(rep.qber_pred == doctest::Approx(0.5).epsilon(0.02));
    CHECK(rep.r_sk_bps == 0.0);
  }
}

TEST_CASE("r_sk vanishes whenever i_ab <= i_ae") {
  const DetectorSpec det;
  const SystemParams p = default_params(ProtocolId::Dpts);
  for (double loss = 5.0; loss <= 45.0; loss += 0.5) {
    const RateReport rep = predict_rates(ProtocolId::Dpts, p,
                                         ChannelSpec::loss(loss), det);
    if (rep.i_ab <= rep.i_ae) CHECK(rep.r_sk_bps == 0.0);
  }
}

TEST_CASE("summed detected rate respects the dead-time ceiling") {
  const DetectorSpec det;
  for (ProtocolId proto : {ProtocolId::Dpts, ProtocolId::Dps}) {
    for (double loss = 0.5; loss <= 10.0; loss += 0.5) {
      const RateReport rep = predict_rates(proto, default_params(proto),
                                           ChannelSpec::loss(loss), det);
      double sum = 0.0;
      for (double m : rep.measured_per_detector_hz) sum += m;
      CHECK(sum <= 2.0 / det.dead_time_s * (1 + 1e-12));
    }
  }
}

TEST_CASE("qber at 50 km sits in the intrinsic-error regime") {
  const RateReport rep =
      predict_rates(ProtocolId::Dpts, default_params(ProtocolId::Dpts),
                    ChannelSpec::fiber(50.0), DetectorSpec{});
  CHECK(rep.qber_pred >= 0.01);
  CHECK(rep.qber_pred <= 0.03);
}

TEST_CASE("classical leakage raises the dark budget") {
  ChannelSpec ch = ChannelSpec::fiber(90.0);
  const RateReport plain = predict_rates(
      ProtocolId::Dpts, default_params(ProtocolId::Dpts), ch, DetectorSpec{});
  ch.classical = ClassicalChannelSpec{};
  const RateReport loud = predict_rates(
      ProtocolId::Dpts, default_params(ProtocolId::Dpts), ch, DetectorSpec{});
  CHECK(loud.background_hz > 0.0);
  CHECK(loud.qber_pred > plain.qber_pred);
  CHECK(loud.r_sk_bps < plain.r_sk_bps);
}

TEST_CASE("ec inefficiency scales the secret rate down") {
  SystemParams p = default_params(ProtocolId::Dps);
  const RateReport base = predict_rates(ProtocolId::Dps, p,
                                        ChannelSpec::loss(11.0), DetectorSpec{});
  p.ec_efficiency = 1.2;
  const RateReport taxed = predict_rates(ProtocolId::Dps, p,
                                         ChannelSpec::loss(11.0), DetectorSpec{});
  CHECK(taxed.r_sk_bps == doctest::Approx(base.r_sk_bps / 1.2).epsilon(1e-12));
}

TEST_CASE("bb84 decoy reference behaves sanely") {
  SystemParams p = default_params(ProtocolId::Bb84Decoy);
  const DetectorSpec det;

  // Noiseless sanity: no darks, perfect visibility => e1 = 0, positive rate.
  SystemParams ideal = p;
  ideal.visibility_v = 1.0;
  ideal.insertion_loss_db = 0.0;
  DetectorSpec clean;
  clean.dark_rate_hz = 0.0;
  clean.dead_time_s = 0.0;
  const RateReport perfect =
      bb84_decoy_rate(ideal, ChannelSpec::loss(0.01), clean);
  CHECK(perfect.qber_pred == doctest::Approx(0.0).scale(1.0));
  CHECK(perfect.r_sk_bps > 0.0);

  double prev = 1e18;
  for (double loss = 5.0; loss <= 40.0; loss += 5.0) {
    const RateReport rep = bb84_decoy_rate(p, ChannelSpec::loss(loss), det);
    CHECK(rep.r_sk_bps < prev);
    prev = rep.r_sk_bps;
  }

  // At 40 dB the decoy reference outlives the DPR curves.
  const RateReport bb = bb84_decoy_rate(p, ChannelSpec::loss(40.0), det);
  const RateReport dp = predict_rates(
      ProtocolId::Dpts, default_params(ProtocolId::Dpts), ChannelSpec::loss(40.0), det);
  CHECK(bb.r_sk_bps > dp.r_sk_bps);

  SystemParams no_bb84 = default_params(ProtocolId::Dpts);
  CHECK_THROWS_AS(bb84_decoy_rate(no_bb84, ChannelSpec::loss(10.0), det),
                  std::invalid_argument);
}

TEST_CASE("mu optimizer finds an interior optimum under loss") {
  // Ideal detectors at 5 dB: the closed-form optimum of mu e^{-2 mu (1-t)}
  // sits near 1/(2(1-t)) ~ 0.73, well inside the range.
  SystemParams p = default_params(ProtocolId::Dpts);
  p.visibility_v = 1.0;
  p.e_time = 0.0;
  p.e_phase = 0.0;
  DetectorSpec det;
  det.dark_rate_hz = 0.0;
  det.dead_time_s = 0.0;
  det.jitter_s = 0.0;
  const auto opt =
      optimize_mu(ProtocolId::Dpts, p, ChannelSpec::loss(5.0), det, 0.05, 1.5);
  CHECK(!opt.all_zero);
  CHECK(opt.r_sk_opt > 0.0);
  CHECK(opt.mu_opt > 0.06);
  CHECK(opt.mu_opt < 1.49);
  CHECK(opt.mu_opt == doctest::Approx(0.5 / (1.0 - db_to_linear(5.0))).epsilon(0.05));
}

TEST_CASE("mu optimizer agrees with a dense grid scan") {
  const DetectorSpec det;
  const SystemParams base = default_params(ProtocolId::Dpts);
  for (double loss : {8.0, 14.0, 20.0}) {
    const ChannelSpec ch = ChannelSpec::loss(loss);
    const auto opt = optimize_mu(ProtocolId::Dpts, base, ch, det, 0.02, 1.0);

    double best_mu = 0.02, best_rate = -1.0;
    const int n = 10000;
    for (int i = 0; i <= n; ++i) {
      const double mu = 0.02 + (1.0 - 0.02) * i / n;
      SystemParams p = base;
      p.mu = mu;
      const double r = predict_rates(ProtocolId::Dpts, p, ch, det).r_sk_bps;
      if (r > best_rate) {
        best_rate = r;
        best_mu = mu;
      }
    }
    CHECK(std::abs(opt.mu_opt - best_mu) <= (1.0 - 0.02) / n + 1e-6);
    CHECK(opt.r_sk_opt >= best_rate * (1.0 - 1e-9));
  }
}

TEST_CASE("mu optimizer flags an all-zero search range") {
  const auto opt =
      optimize_mu(ProtocolId::Dpts, default_params(ProtocolId::Dpts),
                  ChannelSpec::loss(60.0), DetectorSpec{}, 0.05, 1.0);
  CHECK(opt.all_zero);
  CHECK(opt.r_sk_opt == 0.0);
  CHECK_THROWS_AS(optimize_mu(ProtocolId::Dpts, default_params(ProtocolId::Dpts),
                              ChannelSpec::loss(10.0), DetectorSpec{}, 0.0, 2.5),
                  std::invalid_argument);
}

TEST_CASE("crossover search matches a fine linear scan") {
  const DetectorSpec det;
  const SystemParams pa = default_params(ProtocolId::Dpts);
  const SystemParams pb = default_params(ProtocolId::Dps);
  const ChannelSpec ch = ChannelSpec::loss(10.0);

  const auto cross =
      crossover_loss(ProtocolId::Dpts, pa, ProtocolId::Dps, pb, ch, det);
  REQUIRE(cross.has_value());

  // Linear-scan oracle at 0.1 dB steps.
  double scan = -1.0;
  double prev = predict_rates(ProtocolId::Dpts, pa, ChannelSpec::loss(5.0), det)
                    .r_sk_bps -
                predict_rates(ProtocolId::Dps, pb, ChannelSpec::loss(5.0), det)
                    .r_sk_bps;
  for (double loss = 5.1; loss <= 45.0; loss += 0.1) {
    const double cur =
        predict_rates(ProtocolId::Dpts, pa, ChannelSpec::loss(loss), det).r_sk_bps -
        predict_rates(ProtocolId::Dps, pb, ChannelSpec::loss(loss), det).r_sk_bps;
    if ((prev < 0) != (cur < 0)) {
      scan = loss;
      break;
    }
    prev = cur;
  }
  REQUIRE(scan > 0.0);
  CHECK(std::abs(*cross - scan) <= 0.1);

  // A protocol against itself never crosses.
  CHECK(!crossover_loss(ProtocolId::Dpts, pa, ProtocolId::Dpts, pa, ch, det)
             .has_value());
}
