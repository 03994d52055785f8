"""Why monotone gradient networks cannot produce crossing transport routes.

Both GradNetC and GradNetM build their Jacobian as a sum of terms of the form
W^T diag(positive) W and L L^T, so it is symmetric positive definite no matter
what the parameters are. Here we scramble the parameters with large random
noise and look at the Jacobian anyway.
"""

import numpy as np

from gradnetot import gradnet as gn

rng = np.random.default_rng(0)

for arch in ("C", "M", "baseline"):
    net = gn.init(arch, 4, rng)
    # wreck the initialization: these are far from anything training would produce
    for k, v in net.params.items():
        net.params[k] = v + 3.0 * rng.standard_normal(v.shape)

    X = 4.0 * rng.standard_normal((500, 4))
    J = net.jacobian(X)
    asym = np.max(np.abs(J - np.swapaxes(J, 1, 2)))
    eig = np.linalg.eigvals(J).real.min()
    print(f"{arch:>8}: max |J - J^T| = {asym:.2e}, smallest eigenvalue (real part) = {eig:+.3e}")

# A positive definite Jacobian everywhere means <T(x) - T(y), x - y> > 0 for
# every pair: transported points never swap order along any line.
X1, X2 = rng.standard_normal((2, 10_000, 4))
for arch in ("C", "M", "baseline"):
    net = gn.init(arch, 4, np.random.default_rng(1))
    for k, v in net.params.items():
        net.params[k] = v + 3.0 * np.random.default_rng(2).standard_normal(v.shape)
    print(f"{arch:>8}: monotonicity violations on 10^4 pairs = {gn.monotonicity_violations(net, X1, X2)}")

# GradNetM is the gradient of tau * logsumexp(phi_m / tau); check that the
# numerical gradient of that potential reproduces the network output.
net = gn.init("M", 3, rng)
x = rng.standard_normal(3)
h = 1e-6
num = np.array([(net.potential(x + h * e) - net.potential(x - h * e)) / (2 * h) for e in np.eye(3)])
print("T(x)            =", net.forward(x))
print("grad potential  =", num)
