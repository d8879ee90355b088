"""Dense and LSTM layers with explicit forward caches and manual backward.

The step/step_backward protocol: a layer (or stack) is driven forward one
time step at a time with ``step``, pushing whatever the backward pass needs
onto an internal LIFO cache.  Backward runs in strict reverse step order
with ``step_backward``, popping the cache.  ``begin`` resets caches (and
recurrent state) for a fresh sequence; ``begin_backward`` resets the
recurrent gradient carries.  Parameter gradients accumulate across steps
until ``zero_grads``.
"""

import numpy as np

__all__ = ["glorot_uniform", "Dense", "LstmCell", "LstmStack", "Mlp"]


def glorot_uniform(rng, fan_in, fan_out, shape, dtype=np.float32):
    """Uniform(-l, l) with l = sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Dense:
    """Affine layer y = act(x W + b) with activation in {linear, relu, tanh}."""

    def __init__(self, n_in, n_out, activation="linear", *, rng, name,
                 dtype=np.float32):
        if activation not in ("linear", "relu", "tanh"):
            raise ValueError(f"unknown activation {activation!r}")
        self.name = name
        self.activation = activation
        self.dtype = np.dtype(dtype)
        self.W = glorot_uniform(rng, n_in, n_out, (n_in, n_out), self.dtype)
        self.b = np.zeros(n_out, dtype=self.dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._cache = []

    def begin(self, batch_size=None):
        self._cache.clear()

    def step(self, x):
        x = np.asarray(x, dtype=self.dtype)
        z = x @ self.W + self.b
        if self.activation == "relu":
            a = np.maximum(z, 0)
            self._cache.append((x, z))
        elif self.activation == "tanh":
            a = np.tanh(z)
            self._cache.append((x, a))
        else:
            a = z
            self._cache.append((x, None))
        return a

    def begin_backward(self, batch_size=None):
        pass

    def step_backward(self, da):
        x, saved = self._cache.pop()
        if self.activation == "relu":
            dz = da * (saved > 0)
        elif self.activation == "tanh":
            dz = da * (1.0 - saved * saved)
        else:
            dz = da
        self.dW += x.T @ dz
        self.db += dz.sum(axis=0)
        return dz @ self.W.T

    def parameters(self):
        return [(f"{self.name}.W", self.W, self.dW),
                (f"{self.name}.b", self.b, self.db)]

    def zero_grads(self):
        self.dW[...] = 0
        self.db[...] = 0


class LstmCell:
    """One LSTM layer. Gate blocks in pre-activation order i, f, g, o."""

    def __init__(self, n_in, units, *, rng, name, dtype=np.float32):
        self.name = name
        self.units = units
        self.dtype = np.dtype(dtype)
        # fan_in counts both the input and the recurrent connection
        self.Wx = glorot_uniform(rng, n_in + units, units, (n_in, 4 * units),
                                 self.dtype)
        self.Wh = glorot_uniform(rng, n_in + units, units, (units, 4 * units),
                                 self.dtype)
        self.b = np.zeros(4 * units, dtype=self.dtype)
        self.b[units:2 * units] = 1.0  # forget-gate bias starts open
        self.dWx = np.zeros_like(self.Wx)
        self.dWh = np.zeros_like(self.Wh)
        self.db = np.zeros_like(self.b)
        self._cache = []

    def begin(self):
        self._cache.clear()

    def step(self, x, h, c):
        x = np.asarray(x, dtype=self.dtype)
        u = self.units
        pre = x @ self.Wx + h @ self.Wh + self.b
        i = _sigmoid(pre[:, :u])
        f = _sigmoid(pre[:, u:2 * u])
        g = np.tanh(pre[:, 2 * u:3 * u])
        o = _sigmoid(pre[:, 3 * u:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        self._cache.append((x, h, c, i, f, g, o, tc))
        return h_new, c_new

    def step_backward(self, dh, dc):
        """Gradients w.r.t. (x, h_prev, c_prev) given those w.r.t. (h, c)."""
        x, h, c, i, f, g, o, tc = self._cache.pop()
        u = self.units
        do = dh * tc
        dc_total = dc + dh * o * (1.0 - tc * tc)
        di = dc_total * g
        df = dc_total * c
        dg = dc_total * i
        dc_prev = dc_total * f
        dpre = np.empty((x.shape[0], 4 * u), dtype=self.dtype)
        dpre[:, :u] = di * i * (1.0 - i)
        dpre[:, u:2 * u] = df * f * (1.0 - f)
        dpre[:, 2 * u:3 * u] = dg * (1.0 - g * g)
        dpre[:, 3 * u:] = do * o * (1.0 - o)
        self.dWx += x.T @ dpre
        self.dWh += h.T @ dpre
        self.db += dpre.sum(axis=0)
        dx = dpre @ self.Wx.T
        dh_prev = dpre @ self.Wh.T
        return dx, dh_prev, dc_prev

    def parameters(self):
        return [(f"{self.name}.Wx", self.Wx, self.dWx),
                (f"{self.name}.Wh", self.Wh, self.dWh),
                (f"{self.name}.b", self.b, self.db)]

    def zero_grads(self):
        self.dWx[...] = 0
        self.dWh[...] = 0
        self.db[...] = 0


class LstmStack:
    """Stacked LSTM driven one step at a time, managing its own state.

    Forward: ``begin(batch)`` zeros the (h, c) state of every layer, then
    each ``step(x)`` feeds x through the stack bottom-up and returns the top
    h.  Backward: ``begin_backward()`` zeros the recurrent gradient carries,
    then ``step_backward(dout)`` consumes the gradient w.r.t. the top output
    of the matching forward step (steps in reverse order) and returns the
    gradient w.r.t. that step's input.
    """

    def __init__(self, input_dim, units, depth=2, *, rng, name,
                 dtype=np.float32):
        self.units = units
        self.dtype = np.dtype(dtype)
        self.cells = []
        n_in = input_dim
        for k in range(depth):
            self.cells.append(LstmCell(n_in, units, rng=rng,
                                       name=f"{name}.l{k}", dtype=dtype))
            n_in = units
        self._state = None
        self._dstate = None

    def begin(self, batch_size):
        z = lambda: np.zeros((batch_size, self.units), dtype=self.dtype)
        self._state = [(z(), z()) for _ in self.cells]
        for cell in self.cells:
            cell.begin()

    def set_state(self, state):
        """Install (h, c) pairs, e.g. to hand an encoder state to a decoder."""
        self._state = [(h.copy(), c.copy()) for h, c in state]

    def get_state(self):
        return [(h.copy(), c.copy()) for h, c in self._state]

    def step(self, x):
        out = x
        for k, cell in enumerate(self.cells):
            h, c = self._state[k]
            h2, c2 = cell.step(out, h, c)
            self._state[k] = (h2, c2)
            out = h2
        return out

    def begin_backward(self, batch_size):
        z = lambda: np.zeros((batch_size, self.units), dtype=self.dtype)
        self._dstate = [(z(), z()) for _ in self.cells]

    def step_backward(self, dout):
        d = dout
        for k in range(len(self.cells) - 1, -1, -1):
            dh_carry, dc_carry = self._dstate[k]
            dx, dh_prev, dc_prev = self.cells[k].step_backward(d + dh_carry,
                                                               dc_carry)
            self._dstate[k] = (dh_prev, dc_prev)
            d = dx
        return d

    def parameters(self):
        out = []
        for cell in self.cells:
            out.extend(cell.parameters())
        return out

    def zero_grads(self):
        for cell in self.cells:
            cell.zero_grads()


class Mlp:
    """Chain of Dense layers sharing the step/step_backward protocol.

    Stateless across steps, so it can stand in for a recurrent stack
    wherever only the per-step mapping matters.
    """

    def __init__(self, dims, activations, *, rng, name, dtype=np.float32):
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        self.layers = [
            Dense(dims[k], dims[k + 1], activations[k], rng=rng,
                  name=f"{name}.d{k}", dtype=dtype)
            for k in range(len(activations))
        ]

    def begin(self, batch_size=None):
        for layer in self.layers:
            layer.begin()

    def step(self, x):
        for layer in self.layers:
            x = layer.step(x)
        return x

    def begin_backward(self, batch_size=None):
        for layer in self.layers:
            layer.begin_backward(batch_size)

    def step_backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.step_backward(dout)
        return dout

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()
