"""The convention ledger.

Every transform in this package depends on a handful of normalization
choices that must agree with each other or nothing downstream works
(frame inversion, Weyl calculus, modulation norms, the parametrix phase).
They are fixed here, once, with the derived constants everything else
imports. docs/conventions.md narrates the same table for humans.

Ledger
------
Fourier transform      Ff(xi) = INT e^{-i x xi} f(x) dx
Inverse                f(x)   = (2 pi)^{-d} INT e^{i x xi} Ff(xi) dxi
Translation            T_a f(y) = f(y - a)
Modulation             M_w f(y) = e^{i w y} f(y)
TF shift               pi(x, w) = T_x M_w   (so pi(z) f(y) = e^{i w (y-x)} f(y-x))
STFT                   V_g f(z) = <f, pi(z) g>, conjugate-linear in g
Weyl quantization      a^w f(x) = (2 pi)^{-d} INT INT e^{i (x-y) xi}
                                  a((x+y)/2, xi) f(y) dy dxi      (1^w = Id)
Modulation norm        ||f||_{M^{p,q}} = (2 pi)^{-d/2} || ||V_g f||_{L^p_x} ||_{L^q_w}
                                                                  (M^2 = L^2)
Gabor cell weight      alpha beta (2 pi)^{-d} per lattice node, so the
                       Riemann frame operator tends to Id as the lattice
                       densifies
Gaussian window        g(x) = 2^{1/4} e^{-pi x^2}, ||g||_2 = 1
Frame existence        Gaussian Gabor frames require alpha beta < 2 pi
Default lattice        alpha beta = pi / 2, aspect-matched to the window:
                       alpha = sqrt(alpha beta / (2 pi)), beta = 2 pi alpha
Polynomial weight      v_r(z) = (1 + |z|^2)^{r/2}
"""

import numpy as np

# Bumped whenever a ledger entry changes meaning. Reports embed it.
LEDGER_VERSION = "gaborprop-conventions-1"

#: spatial dimension of the desk-scale implementation
DIM = 1

#: constant in the Fourier inversion formula, (2 pi)^{-d}
INV_FOURIER_CONST = 1.0 / (2.0 * np.pi) ** DIM

#: constant in front of the Weyl double integral, (2 pi)^{-d}
WEYL_CONST = 1.0 / (2.0 * np.pi) ** DIM

#: prefactor of every modulation norm, (2 pi)^{-d/2}
MOD_NORM_CONST = 1.0 / (2.0 * np.pi) ** (DIM / 2.0)

#: Gaussian Gabor frames exist iff alpha * beta < this
FRAME_CRITICAL_DENSITY = 2.0 * np.pi

#: default lattice density alpha * beta
DEFAULT_LATTICE_DENSITY = np.pi / 2.0


def gabor_cell_weight(alpha, beta):
    """Riemann cell weight alpha*beta*(2 pi)^{-d} of one lattice node."""
    return alpha * beta / (2.0 * np.pi) ** DIM


def matched_lattice_steps(density=DEFAULT_LATTICE_DENSITY):
    """Aspect-matched lattice steps (alpha, beta) for the standard window.

    Under the ledger convention |V_g g| has 1/e widths sqrt(2/pi) in x and
    sqrt(8 pi) in omega (ratio exactly 2 pi). Matching the lattice to that
    aspect, alpha/beta = 1/(2 pi), keeps the adjoint-lattice Janssen tails
    symmetric and the frame bounds tight. A square lattice at the same
    density puts an adjoint point one window-width away in omega and ruins
    B/A.
    """
    if not 0.0 < density < FRAME_CRITICAL_DENSITY:
        raise ValueError(
            f"lattice density alpha*beta must be in (0, 2 pi), got {density}"
        )
    alpha = np.sqrt(density / (2.0 * np.pi))
    return alpha, 2.0 * np.pi * alpha
