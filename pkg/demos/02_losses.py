"""
Class-balanced losses and their analytic gradients
===================================================

"""
import numpy as np

from celldet import losses

rng = np.random.default_rng(0)
y = np.eye(3)[rng.choice(3, size=(8, 8), p=[0.8, 0.15, 0.05])].transpose(2, 0, 1)
y_hat = rng.dirichlet(np.ones(3), size=(8, 8)).transpose(2, 0, 1)

# rare classes get large weights
print("dice weights:", losses.dice_class_weights(y).round(3))
print("mse weights: ", losses.mse_class_weights(y).round(3))

d = losses.generalized_dice_loss(y, y_hat)
m = losses.weighted_mse_loss(y, y_hat)
print(f"dice {d.value:.4f}  weighted mse {m.value:.4f}")

# check one gradient entry against a central difference
i = (2, 3, 4)
e = np.zeros_like(y_hat)
e[i] = 1e-6
fd = (losses.generalized_dice_loss(y, y_hat + e).value
      - losses.generalized_dice_loss(y, y_hat - e).value) / 2e-6
print(f"d dice / d y_hat{i}: analytic {d.gradient[i]:.6e}  numeric {fd:.6e}")

# perfect predictions cost nothing
print("L(y, y):", losses.generalized_dice_loss(y, y).value, losses.weighted_mse_loss(y, y).value)
