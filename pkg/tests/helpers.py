"""Finite-difference and Gaussian oracles shared by the test modules."""

import itertools

import numpy as np
from scipy import special

from bifactor_copula.gof import _pi2, cell_layout, parameter_labels
from bifactor_copula.model import BIFACTOR, MarginEvaluator


def pi2(spec, rule):
    return _pi2(spec, cell_layout(spec.n_categories), MarginEvaluator(spec, rule))


def perturb(spec, label, h):
    """Copy of ``spec`` with one Delta2 column's parameter moved by ``h``."""
    if label[0] == "alpha":
        _, j, k = label
        cuts = [a.copy() for a in spec.cutpoints]
        cuts[j][k - 1] = special.ndtr(special.ndtri(cuts[j][k - 1]) + h)
        return spec.with_cutpoints(cuts)
    idx = spec.free_index().index(label)
    v = spec.free_values()
    v[idx] += h
    return spec.with_free_values(v)


def fd_delta2(spec, rule, h=1e-6):
    cols = []
    for lab in parameter_labels(spec):
        cols.append((pi2(perturb(spec, lab, h), rule) - pi2(perturb(spec, lab, -h), rule)) / (2 * h))
    return np.column_stack(cols)


def max_rel_err(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def gaussian_corr(spec):
    """Latent correlation matrix of an all-normal bi-factor or second-order spec."""
    th = np.array([c.theta for c in spec.common_links])
    de = np.array([c.theta for c in spec.group_links])
    g = spec.groups.group_of
    same = np.equal.outer(g, g)
    if spec.structure == BIFACTOR:
        gam = de * np.sqrt(1 - th ** 2)
        R = np.outer(th, th) + np.outer(gam, gam) * same
    else:
        load = th * de[g]
        R = np.where(same, np.outer(th, th), np.outer(load, load))
    np.fill_diagonal(R, 1.0)
    return R


def all_outcomes(spec):
    return np.array(list(itertools.product(*[range(k) for k in spec.n_categories])))
