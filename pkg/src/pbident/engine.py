"""Fast simulation engine: compiled-model RHS expressions are flattened to a
postfix opcode stream and interpreted inside a JIT-compiled adaptive
Runge-Kutta integrator (Dormand-Prince 5(4) pair, FSAL).

Steps never cross output grid points, so every grid value is a step endpoint
under full error control. Exogenous inputs are held zero-order or linearly
interpolated between samples. Any non-finite stage evaluation, step-count
exhaustion within an output interval, or step-size underflow aborts the
trajectory; the index of the last valid grid point is reported.

Batched runs integrate independent parameter vectors in parallel; every
candidate's arithmetic is self-contained, so results are bit-identical
regardless of thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from .modelspace import SBin, SFn, SInput, SLit, SNeg, SParam, SState

OP_LIT = 0
OP_STATE = 1
OP_INPUT = 2
OP_PARAM = 3
OP_ADD = 4
OP_SUB = 5
OP_MUL = 6
OP_DIV = 7
OP_NEG = 8
OP_POW = 9
OP_EXP = 10
OP_SQRT = 11

HOLD_ZERO_ORDER = 0
HOLD_LINEAR = 1


def compile_programs(rhs):
    """Flatten per-state RHS expressions into one opcode/operand stream.

    Returns (ops, args, literals, bounds, stack_need) where bounds[s]:bounds[s+1]
    delimits state s's program. pow with a literal 0.5 exponent is specialized
    to a square-root opcode.
    """
    ops: list[int] = []
    args: list[int] = []
    lits: list[float] = []
    lit_index: dict[float, int] = {}
    bounds = [0]
    max_depth = 0

    def lit(value: float) -> int:
        key = float(value)
        if key not in lit_index:
            lit_index[key] = len(lits)
            lits.append(key)
        return lit_index[key]

    def emit(expr, depth):
        nonlocal max_depth
        if isinstance(expr, SLit):
            ops.append(OP_LIT)
            args.append(lit(expr.value))
        elif isinstance(expr, SState):
            ops.append(OP_STATE)
            args.append(expr.index)
        elif isinstance(expr, SInput):
            ops.append(OP_INPUT)
            args.append(expr.index)
        elif isinstance(expr, SParam):
            ops.append(OP_PARAM)
            args.append(expr.index)
        elif isinstance(expr, SNeg):
            emit(expr.operand, depth)
            ops.append(OP_NEG)
            args.append(0)
            return
        elif isinstance(expr, SBin):
            emit(expr.left, depth)
            emit(expr.right, depth + 1)
            ops.append({"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}[expr.op])
            args.append(0)
            return
        elif isinstance(expr, SFn):
            if expr.func == "exp":
                emit(expr.args[0], depth)
                ops.append(OP_EXP)
                args.append(0)
            else:  # pow
                exponent = expr.args[1]
                if isinstance(exponent, SLit) and exponent.value == 0.5:
                    emit(expr.args[0], depth)
                    ops.append(OP_SQRT)
                    args.append(0)
                else:
                    emit(expr.args[0], depth)
                    emit(exponent, depth + 1)
                    ops.append(OP_POW)
                    args.append(0)
            return
        else:  # pragma: no cover
            raise TypeError(f"cannot compile {expr!r}")
        max_depth = max(max_depth, depth + 1)

    for expr in rhs:
        emit(expr, 0)
        bounds.append(len(ops))

    if not lits:
        lits.append(0.0)
    return (
        np.asarray(ops, dtype=np.int32),
        np.asarray(args, dtype=np.int32),
        np.asarray(lits, dtype=np.float64),
        np.asarray(bounds, dtype=np.int32),
        max(max_depth + 2, 4),
    )


@njit(cache=True, error_model="numpy")
def _eval(ops, args, lits, lo, hi, y, u, p, stack):
    sp = 0
    for i in range(lo, hi):
        op = ops[i]
        if op == OP_LIT:
            stack[sp] = lits[args[i]]
            sp += 1
        elif op == OP_STATE:
            stack[sp] = y[args[i]]
            sp += 1
        elif op == OP_PARAM:
            stack[sp] = p[args[i]]
            sp += 1
        elif op == OP_INPUT:
            stack[sp] = u[args[i]]
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_DIV:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] / stack[sp]
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_SQRT:
            stack[sp - 1] = np.sqrt(stack[sp - 1])
        elif op == OP_EXP:
            stack[sp - 1] = np.exp(stack[sp - 1])
        else:  # OP_POW
            sp -= 1
            stack[sp - 1] = stack[sp - 1] ** stack[sp]
    return stack[0]


@njit(cache=True, error_model="numpy")
def _rhs(ops, args, lits, bounds, y, u, p, out, stack):
    ok = True
    for s in range(bounds.shape[0] - 1):
        value = _eval(ops, args, lits, bounds[s], bounds[s + 1], y, u, p, stack)
        out[s] = value
        if not np.isfinite(value):
            ok = False
    return ok


# Dormand-Prince 5(4) tableau (FSAL: last stage of an accepted step is the
# first stage of the next one within an interval).
_C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


@njit(cache=True, error_model="numpy")
def _integrate(ops, args, lits, bounds, stack_need, y0, U, dt, params, traj,
               abs_tol, rel_tol, max_steps, hold):
    """Integrate over the uniform output grid; returns index of last valid point."""
    n_out = traj.shape[0]
    ns = y0.shape[0]
    nu = U.shape[1]
    y = y0.copy()
    k1 = np.empty(ns)
    k2 = np.empty(ns)
    k3 = np.empty(ns)
    k4 = np.empty(ns)
    k5 = np.empty(ns)
    k6 = np.empty(ns)
    k7 = np.empty(ns)
    yt = np.empty(ns)
    yn = np.empty(ns)
    u = np.empty(max(nu, 1))
    du = np.empty(max(nu, 1))
    stack = np.empty(stack_need)

    for i in range(ns):
        if not np.isfinite(y[i]):
            return -1
        traj[0, i] = y[i]
    h_work = dt  # working step size, carried across intervals

    for k in range(n_out - 1):
        for j in range(nu):
            u[j] = U[k, j]
            du[j] = (U[k + 1, j] - U[k, j]) / dt if hold == HOLD_LINEAR else 0.0

        if not _rhs(ops, args, lits, bounds, y, u, params, k1, stack):
            return k
        t = 0.0
        steps = 0
        while True:
            rem = dt - t
            if rem <= 1e-12 * dt:
                break
            capped = h_work >= rem
            h = rem if capped else h_work
            finite = True

            if hold == HOLD_LINEAR:
                for j in range(nu):
                    u[j] = U[k, j] + du[j] * (t + _C[1] * h)
            for i in range(ns):
                yt[i] = y[i] + h * (_A21 * k1[i])
            finite &= _rhs(ops, args, lits, bounds, yt, u, params, k2, stack)

            if hold == HOLD_LINEAR:
                for j in range(nu):
                    u[j] = U[k, j] + du[j] * (t + _C[2] * h)
            for i in range(ns):
                yt[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
            finite &= _rhs(ops, args, lits, bounds, yt, u, params, k3, stack)

            if hold == HOLD_LINEAR:
                for j in range(nu):
                    u[j] = U[k, j] + du[j] * (t + _C[3] * h)
            for i in range(ns):
                yt[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
            finite &= _rhs(ops, args, lits, bounds, yt, u, params, k4, stack)

            if hold == HOLD_LINEAR:
                for j in range(nu):
                    u[j] = U[k, j] + du[j] * (t + _C[4] * h)
            for i in range(ns):
                yt[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
            finite &= _rhs(ops, args, lits, bounds, yt, u, params, k5, stack)

            if hold == HOLD_LINEAR:
                for j in range(nu):
                    u[j] = U[k, j] + du[j] * (t + h)
            for i in range(ns):
                yt[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i]
                                    + _A64 * k4[i] + _A65 * k5[i])
            finite &= _rhs(ops, args, lits, bounds, yt, u, params, k6, stack)

            for i in range(ns):
                yn[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i]
                                    + _B5 * k5[i] + _B6 * k6[i])
            finite &= _rhs(ops, args, lits, bounds, yn, u, params, k7, stack)

            err = 0.0
            for i in range(ns):
                e = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i]
                         + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i])
                sc = abs_tol + rel_tol * max(abs(y[i]), abs(yn[i]))
                err += (e / sc) ** 2
            err = np.sqrt(err / ns)

            steps += 1
            if steps > max_steps:
                return k

            if not finite or not np.isfinite(err):
                # non-finite trial stage: reject and retry smaller; a state that
                # genuinely leaves the domain underflows h and fails below
                h_work = 0.5 * h
                if h_work < 1e-12 * dt:
                    return k
                continue
            if err > 1.0:
                h_work = h * max(0.2, 0.9 * err ** -0.2)
                if h_work < 1e-12 * dt:
                    return k
                continue
            t += h
            for i in range(ns):
                y[i] = yn[i]
                k1[i] = k7[i]
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            # a step shortened only to land on the grid must not shrink h_work
            h_work = max(h_work, h * fac) if capped else h * fac
            if hold == HOLD_LINEAR and t < dt:
                for j in range(nu):
                    u[j] = U[k, j] + du[j] * t
                if not _rhs(ops, args, lits, bounds, y, u, params, k1, stack):
                    return k

        for i in range(ns):
            traj[k + 1, i] = y[i]
    return n_out - 1


@njit(cache=True, parallel=True, error_model="numpy")
def _integrate_batch(ops, args, lits, bounds, stack_need, y0, U, dt, P, trajs,
                     reached, abs_tol, rel_tol, max_steps, hold):
    for b in prange(P.shape[0]):
        reached[b] = _integrate(ops, args, lits, bounds, stack_need, y0, U, dt,
                                P[b], trajs[b], abs_tol, rel_tol, max_steps, hold)


def integrate_batch(code, y0, U, dt, params, n_out, abs_tol, rel_tol, max_steps, hold):
    """Integrate a batch of parameter vectors over the first `n_out` grid points.

    Returns (trajectories, reached): trajectories has shape (B, n_out, n_states)
    with NaN beyond the failure index; reached[b] is the last valid index.
    """
    ops, args, lits, bounds, stack_need = code
    P = np.ascontiguousarray(params, dtype=np.float64)
    B = P.shape[0]
    ns = y0.shape[0]
    trajs = np.full((B, n_out, ns), np.nan)
    reached = np.empty(B, dtype=np.int64)
    _integrate_batch(ops, args, lits, bounds, stack_need, y0,
                     np.ascontiguousarray(U[:n_out]), dt, P, trajs, reached,
                     abs_tol, rel_tol, max_steps, hold)
    for b in range(B):
        if reached[b] < 0:
            trajs[b, 0, :] = np.nan  # partial row write on invalid initial state
    return trajs, reached
