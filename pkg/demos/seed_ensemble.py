"""
Same fit, different energies
============================

With both coupling terms present the data no longer pin the decomposition
down.  Seeds that fit equally well can split the energy between the terms
quite differently; the uncoupled ansatz has one answer only.
"""

from splinehyper import AnsatzSpec, assemble_model, invariant_ranges, seed_ensemble
from splinehyper.oracle import synth_dataset

data = synth_dataset("coupled_I1J", {"c1": 0.1, "kappa": 1.0}, traction_free=True)
ranges = invariant_ranges(data.programs)

for terms in (("u1", "u2", "uJ"), ("u1", "u2", "uJ", "c1J", "c2J")):
    model = assemble_model(AnsatzSpec.from_terms(terms, 16), ranges)
    rep = seed_ensemble(model, data, n_seeds=8 if len(terms) > 3 else 4)
    print(" + ".join(terms))
    print(f"  max pairwise distance {rep.max_distance:.3e}")
    for seed, res, ok in zip(rep.seeds, rep.results, rep.successes):
        share = {t: v["UT"] for t, v in res.term_contributions.items()}
        parts = "  ".join(f"{t} {v:.3f}" for t, v in share.items())
        print(f"  seed {seed}: sqrt(L) {res.sqrt_loss:.2e} {'ok ' if ok else 'bad'}  UT shares: {parts}")
