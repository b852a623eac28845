"""Continuous-variable quantum physics-informed neural network toolkit.

Subpackages: ``fock`` (truncated-basis gate set), ``duals``/``gradients``
(first-order differentiation contracts), ``qnn`` (layered circuit and batch
engine), ``pinn`` (losses and collocation), ``optimize`` (training loop),
``problems`` (benchmarks and reference solutions), ``cli`` (command front
end). The quadrature convention x_hat = a + a_dag is documented in ``fock``.
"""

__version__ = "0.1.0"
