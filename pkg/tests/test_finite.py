import math

import numpy as np
import pytest
from scipy.special import comb

from kacgibbs import finite as fs
from kacgibbs.errors import AcceptanceStarvation, EnumerationTooLarge, UnsupportedRegimeError
from kacgibbs.finite import _nearest_sum


def test_hamiltonian_examples():
    lm = fs.LatticeSpec(1, 1.0).lattice(2)
    assert fs.hamiltonian_n(fs.SpinConfig(2, 1, [1, 1]), lm) == pytest.approx(-1.0)
    assert fs.hamiltonian_n(fs.SpinConfig(2, 1, [1, -1]), lm) == pytest.approx(0.0)
    lm1 = fs.LatticeSpec(1, 1.0, field=1.0).lattice(2)
    assert fs.hamiltonian_n(fs.SpinConfig(2, 1, [1, 1]), lm1) == pytest.approx(-3.0)


def test_energy_pushforward_is_exact():
    rng = np.random.default_rng(0)
    for spec, n in ((fs.LatticeSpec(1, 1.0, kernel="cosine-bump", field=0.2), 9),
                    (fs.LatticeSpec(2, 0.5, kernel="cosine-bump"), 5)):
        lm = spec.lattice(n)
        for _ in range(5):
            s = fs.SpinConfig(n, spec.d, rng.choice([-1, 1], size=(n,) * spec.d))
            assert abs(fs.energy_pushforward_gap(s, lm)) <= 1e-12


def test_energies_match_hamiltonian():
    lm = fs.LatticeSpec(1, 1.0, kernel="cosine-bump", field=-0.3).lattice(6)
    cfg = fs.all_configs(6)
    E = fs.energies(lm, cfg)
    for k in (0, 7, 33, 63):
        assert E[k] == pytest.approx(fs.hamiltonian_n(fs.SpinConfig(6, 1, cfg[k]), lm), abs=1e-12)


def test_enumeration_limit():
    with pytest.raises(EnumerationTooLarge):
        fs.all_configs(13)
    lm = fs.LatticeSpec(2, 0.5).lattice(4)
    with pytest.raises(EnumerationTooLarge):
        fs.exact_conditional_gamma(4, lm, 0.5, (0,))


@pytest.mark.parametrize("spec,n", [(fs.LatticeSpec(1, 1.3, kernel="cosine-bump", field=0.3), 8),
                                    (fs.LatticeSpec(2, 0.9, kernel="cosine-bump", field=-0.2), 2),
                                    (fs.LatticeSpec(1, 2.0), 4)])
def test_heat_bath_detailed_balance(spec, n):
    lm = spec.lattice(n)
    assert fs.detailed_balance_defect(lm) <= 1e-12
    K = fs.heat_bath_matrix(lm)
    assert np.allclose(K.sum(axis=1), 1.0, atol=1e-14)


def test_empirical_density_examples():
    s = fs.SpinConfig(4, 1, [1, 1, 1, 1])
    em = fs.empirical_density(s)
    assert np.allclose(em.weights, 0.25) and em.size == 4
    perf = fs.empirical_density(s, perforation=0.5)
    assert perf.size == 3 and perf.total_mass() == pytest.approx(1.0)
    alt = fs.empirical_density(fs.SpinConfig(4, 1, [1, -1, 1, -1]))
    assert alt.total_mass() == 0.0 and alt.total_variation() == pytest.approx(1.0)
    assert alt.block_sums(2) == (0, 0)


def test_exact_oracle_at_time_zero_is_bayes():
    # with J = 1 the perforated sum S fixes the local field (S/N + h)
    spec = fs.LatticeSpec(1, 0.8, field=0.1)
    n = 8
    lm = spec.lattice(n)
    for S in (-3, 1, 5):
        got = fs.exact_conditional_gamma(n, lm, 0.0, (S,))
        assert got.p_plus == pytest.approx(0.5 * (1 + math.tanh(0.8 * (S / n + 0.1))), abs=1e-12)


def test_exact_oracle_limits():
    n = 8
    lm0 = fs.LatticeSpec(1, 0.0).lattice(n)
    for t in (0.0, 0.4, 2.0):
        assert fs.exact_conditional_gamma(n, lm0, t, (3,)).p_plus == pytest.approx(0.5, abs=1e-12)
    lm = fs.LatticeSpec(1, 1.5).lattice(n)
    assert fs.exact_conditional_gamma(n, lm, 10.0, (5,)).p_plus == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ValueError):
        fs.exact_conditional_gamma(n, lm, 1.0, (2,))      # wrong parity: empty class


def test_exact_oracle_accepts_empirical_measure():
    n = 6
    lm = fs.LatticeSpec(1, 0.7).lattice(n)
    sigma = fs.SpinConfig(n, 1, [1, 1, -1, 1, -1, 1])
    em = fs.empirical_density(sigma, perforation=0.0)
    a = fs.exact_conditional_gamma(n, lm, 0.3, em, u=0.0)
    b = fs.exact_conditional_gamma(n, lm, 0.3, em.block_sums(), u=0.0)
    assert a == b


def test_oracle_convergence_at_good_magnetisation():
    spec = fs.LatticeSpec(1, 0.8)
    errs = []
    for n in (6, 8, 10, 12):
        S = _nearest_sum(n - 1, 0.5)
        exact = fs.exact_conditional_gamma(n, spec.lattice(n), 0.5, (S,))
        errs.append(abs(exact.p_plus - fs.predicted_conditional_gamma(spec, 0.5, S / (n - 1))))
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_equilibrium_sampler_matches_enumeration():
    spec = fs.LatticeSpec(1, 1.2, kernel="cosine-bump", field=0.2)
    lm = spec.lattice(6)
    w = fs.gibbs_weights(lm)
    cfg = fs.all_configs(6)
    exact = w @ cfg[:, 0].astype(float)
    sample = fs.equilibrium_ensemble(lm, 100_000, sweeps=30, seed=1)
    x = sample[:, 0].astype(float)
    assert abs(x.mean() - exact) <= 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_equilibrium_sampler_infinite_temperature():
    lm = fs.LatticeSpec(1, 0.0).lattice(8)
    s = fs.equilibrium_ensemble(lm, 50_000, sweeps=0, seed=2).astype(float)
    assert abs(s.mean()) <= 3 / math.sqrt(s.size)


def test_equilibrium_sampler_low_temperature():
    lm = fs.LatticeSpec(1, 3.0).lattice(10)
    s = fs.equilibrium_ensemble(lm, 2000, sweeps=200, seed=3).astype(float)
    m_star = 0.995
    for _ in range(50):
        m_star = math.tanh(3.0 * m_star)
    assert abs(np.abs(s.mean(axis=1)).mean() - m_star) <= 0.05


def test_glauber_determinism_and_trivial_time():
    lm = fs.LatticeSpec(1, 0.8).lattice(8)
    start = fs.equilibrium_sample(lm, sweeps=20, seed=4)
    a = fs.glauber_simulate(start, lm, 1.5, seed=9, sample_times=np.linspace(0, 1.5, 7))
    b = fs.glauber_simulate(start, lm, 1.5, seed=9, sample_times=np.linspace(0, 1.5, 7))
    assert a.to_csv() == b.to_csv() and a.sidecar() == b.sidecar()
    still = fs.glauber_simulate(start, lm, 0.0, seed=9)
    assert np.array_equal(still.final.spins, start.spins)
    with pytest.raises(ValueError):
        fs.glauber_simulate(start, lm, 1.0, sample_times=[0.5, 0.2])


def test_mean_magnetisation_relaxes_exponentially():
    lm = fs.LatticeSpec(1, 0.0).lattice(8)
    start = np.ones((20_000, 8), dtype=np.int8)
    end = fs.glauber_ensemble(start, lm, 0.5, seed=5).astype(float)
    per = end.mean(axis=1)
    assert abs(per.mean() - math.exp(-1.0)) <= 3 * per.std(ddof=1) / math.sqrt(per.size)


def test_site_autocorrelation():
    lm = fs.LatticeSpec(1, 1.0).lattice(8)
    est, se = fs.site_autocorrelation(lm, 0.5, replicas=10_000, seed=6)
    assert abs(est - math.exp(-1.0)) <= 3 * se


def test_glauber_at_finite_temperature_keeps_gibbs_measure():
    # beta' = beta: the dynamics is reversible for mu^n
    spec = fs.LatticeSpec(1, 1.0, beta_prime=1.0, field=0.3)
    lm = spec.lattice(6)
    exact = fs.gibbs_weights(lm) @ fs.all_configs(6)[:, 0].astype(float)
    start = fs.equilibrium_ensemble(lm, 40_000, sweeps=30, seed=7)
    end = fs.glauber_ensemble(start, lm, 1.0, seed=8).astype(float)
    x = end[:, 0]
    assert abs(x.mean() - exact) <= 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_mc_conditional_gamma_examples():
    n = 8
    lm0 = fs.LatticeSpec(1, 0.0).lattice(n)
    est = fs.mc_conditional_gamma(n, lm0, 0.5, 0.3, 0.15, 40_000, seed=1)
    assert abs(est.kernel.p_plus - 0.5) <= 3 * est.stderr
    lm = fs.LatticeSpec(1, 0.6).lattice(n)
    sym = fs.mc_conditional_gamma(n, lm, 0.7, 0.0, 0.15, 40_000, seed=2)
    assert abs(sym.kernel.p_plus - 0.5) <= 3 * sym.stderr
    # t = 0 against the exact Bayes formula, averaged over the accepted classes
    est0 = fs.mc_conditional_gamma(n, lm, 0.0, 3 / 7, 1e-9, 40_000, seed=3)
    exact = fs.exact_conditional_gamma(n, lm, 0.0, (3,))
    assert abs(est0.kernel.p_plus - exact.p_plus) <= 3 * est0.stderr
    with pytest.raises(AcceptanceStarvation):
        fs.mc_conditional_gamma(n, lm, 0.5, 0.999, 1e-3, 2000, seed=4)


def test_ldp_probe_at_infinite_temperature_is_binomial():
    spec = fs.LatticeSpec(1, 0.0)
    rows, _ = fs.ldp_probe(spec, 0.5, 0.3, [6, 8, 10])
    for r in rows:
        N = r.n
        S = _nearest_sum(N, 0.3)
        exact = -math.log(comb(N, (N + S) // 2, exact=True) / 2.0**N) / N
        assert abs(r.value - exact) <= 1e-10


def test_ldp_probe_rejects_finite_temperature():
    with pytest.raises(UnsupportedRegimeError):
        fs.ldp_probe(fs.LatticeSpec(1, 0.5, beta_prime=0.3), 0.5, 0.2, [4])
    with pytest.raises(UnsupportedRegimeError):
        fs.final_law(fs.LatticeSpec(1, 0.5, beta_prime=0.3).lattice(4), 0.5)


def test_nearest_sum_parity():
    assert _nearest_sum(7, 0.5) in (3, 5)
    assert _nearest_sum(7, 0.5) % 2 == 1
    assert _nearest_sum(8, 0.0) == 0
    assert _nearest_sum(5, 1.0) == 5
