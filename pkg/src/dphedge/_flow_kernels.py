"""Hot loops for polytope projection and greedy decomposition.

The functions here are written as plain nested loops so that one source
serves two deployments: jitted through numba when it is installed (the
default environment), or executed as regular Python otherwise.  Keeping a
single definition avoids any drift between the fast and fallback paths.
"""

from __future__ import annotations

import numpy as np

__all__ = ["project_cycles", "residual_pass", "decompose_loop", "NUMBA_ENABLED"]


def _residual_pass(w, k, src_out, n_m, lvl_ptr, in_ptr, in_ids, out_ptr, out_ids):
    kf = float(k)
    r_src = 0.0
    s = 0.0
    for e in src_out:
        s += w[e]
    r_src = abs(s - kf)
    r_me = 0.0
    for m in range(n_m):
        base = m * k
        mn = w[base]
        mx = w[base]
        mean = 0.0
        for j in range(k):
            x = w[base + j]
            mean += x
            if x < mn:
                mn = x
            if x > mx:
                mx = x
        mean /= kf
        if mean > 0.0:
            rv = (mx - mn) / mean
            if rv > r_me:
                r_me = rv
    r_cons = 0.0
    n_lv = lvl_ptr.shape[0] - 1
    for lvl in range(n_lv):
        for vi in range(lvl_ptr[lvl], lvl_ptr[lvl + 1]):
            fin = 0.0
            for t in range(in_ptr[vi], in_ptr[vi + 1]):
                fin += w[in_ids[t]]
            fout = 0.0
            for t in range(out_ptr[vi], out_ptr[vi + 1]):
                fout += w[out_ids[t]]
            cv = abs(fout - kf * fin)
            if cv > r_cons:
                r_cons = cv
    return r_src, r_me, r_cons


def _project_cycles(w, k, src_out, n_m, lvl_ptr, in_ptr, in_ids, out_ptr, out_ids,
                    tol, max_cycles):
    kf = float(k)
    n_lv = lvl_ptr.shape[0] - 1
    cycles = 0
    skipped = 0
    resid = np.inf
    while cycles < max_cycles:
        cycles += 1
        # source: scale the outgoing weights so they sum to k
        s = 0.0
        for e in src_out:
            s += w[e]
        scale = kf / s
        for e in src_out:
            w[e] *= scale
        # multiedges: set each group to its geometric mean
        for m in range(n_m):
            base = m * k
            p = 1.0
            for j in range(k):
                p *= w[base + j]
            g = p ** (1.0 / kf)
            for j in range(k):
                w[base + j] = g
        # internal vertices, one longest-distance level at a time; vertices
        # inside a level share no edges, so the batch equals sequential order
        for lvl in range(n_lv):
            for vi in range(lvl_ptr[lvl], lvl_ptr[lvl + 1]):
                fin = 0.0
                for t in range(in_ptr[vi], in_ptr[vi + 1]):
                    fin += w[in_ids[t]]
                fout = 0.0
                for t in range(out_ptr[vi], out_ptr[vi + 1]):
                    fout += w[out_ids[t]]
                if fin <= 0.0 or fout <= 0.0:
                    skipped += 1
                    continue
                beta = (kf * fin / fout) ** (1.0 / (kf + 1.0))
                bi = beta ** (-kf)
                for t in range(out_ptr[vi], out_ptr[vi + 1]):
                    w[out_ids[t]] *= beta
                for t in range(in_ptr[vi], in_ptr[vi + 1]):
                    w[in_ids[t]] *= bi
        r_src, r_me, r_cons = _residual_pass(
            w, k, src_out, n_m, lvl_ptr, in_ptr, in_ids, out_ptr, out_ids
        )
        resid = max(r_src, max(r_me, r_cons))
        if resid < tol:
            break
    return resid, cycles, skipped


def _decompose_loop(r, k, topo, is_sink, source, n_v, n_m,
                    vm_ptr, vm_ids, edge_dst, stop_eps, coeffs, counts):
    n_parts = 0
    stuck = -1
    for _ in range(n_m):
        inflow = np.zeros(n_v, dtype=np.int64)
        inflow[source] = 1
        me_counts = np.zeros(n_m, dtype=np.int64)
        complete = True
        for idx in range(topo.shape[0]):
            v = topo[idx]
            if is_sink[v] or inflow[v] == 0:
                continue
            best = -1.0
            best_m = -1
            for t in range(vm_ptr[v], vm_ptr[v + 1]):
                m = vm_ids[t]
                mn = r[m * k]
                for j in range(1, k):
                    x = r[m * k + j]
                    if x < mn:
                        mn = x
                if mn > best:
                    best = mn
                    best_m = m
            if v == source and best <= stop_eps:
                complete = False
                break
            if best_m < 0 or best <= 0.0:
                complete = False
                stuck = v
                break
            me_counts[best_m] += inflow[v]
            for j in range(k):
                inflow[edge_dst[best_m * k + j]] += inflow[v]
        if not complete:
            break
        c = np.inf
        arg_m = -1
        for m in range(n_m):
            cnt = me_counts[m]
            if cnt == 0:
                continue
            for j in range(k):
                ratio = r[m * k + j] / cnt
                if ratio < c:
                    c = ratio
                    arg_m = m
        if arg_m < 0 or c <= 0.0:
            break
        coeffs[n_parts] = c
        for m in range(n_m):
            counts[n_parts, m] = me_counts[m]
        n_parts += 1
        for m in range(n_m):
            cnt = me_counts[m]
            if cnt == 0:
                continue
            for j in range(k):
                e = m * k + j
                x = r[e] - c * cnt
                r[e] = x if x > 0.0 else 0.0
        for j in range(k):
            r[arg_m * k + j] = 0.0
    return n_parts, stuck


try:
    from numba import njit as _njit

    # rebind the helper first: numba resolves module globals at compile time,
    # so _project_cycles will call the jitted residual pass natively
    _residual_pass = _njit(cache=True)(_residual_pass)
    residual_pass = _residual_pass
    project_cycles = _njit(cache=True)(_project_cycles)
    decompose_loop = _njit(cache=True)(_decompose_loop)
    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - numba is an optional speedup
    residual_pass = _residual_pass
    project_cycles = _project_cycles
    decompose_loop = _decompose_loop
    NUMBA_ENABLED = False
