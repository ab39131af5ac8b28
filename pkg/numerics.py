import numpy as np

from gait_errors import NumericalError, ShapeError


class Tensor:
    """Tensor class

    Node of the reverse-mode tape. Every primitive returns a new Tensor
    holding its 64-bit value, its parent nodes and a closure that maps the
    gradient of the output to the gradients of the parents. The graph is
    rebuilt for every sample, so decoding may feed outputs back in freely.
    """

    def __init__(self, value, parents=(), backward_fn=None, op='const'):
        """Constructor

        :param value: Array-like value
        :param tuple parents: Parent tensors
        :param func backward_fn: Maps output gradient to parent gradients
        :param str op: Primitive name (for error messages)
        """
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.op = op
        self.requires_grad = any(p.requires_grad for p in self.parents)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def item(self):
        return float(self.value.reshape(-1)[0])

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def __repr__(self):
        return "Tensor(op=%s, shape=%s)" % (self.op, self.shape)


class Parameter(Tensor):
    """Parameter class

    Named trainable tensor with a gradient accumulator of the same shape.
    """

    def __init__(self, name, value):
        """Constructor

        :param str name: Parameter name, unique within a model
        :param value: Initial value
        """
        super(Parameter, self).__init__(value, op='param')
        self.name = name
        self.requires_grad = True
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return "Parameter(%s, shape=%s)" % (self.name, self.shape)


def as_tensor(value):
    """Wrap a constant array-like value unless it is a Tensor already."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def constant(value):
    return Tensor(np.array(value, dtype=np.float64, copy=True))


def detach(tensor):
    """Return a constant copy of a tensor; no gradient flows back."""
    return constant(tensor.value)


def _make(value, parents, backward_fn, op):
    if not np.all(np.isfinite(value)):
        raise NumericalError("Non-finite value produced by '%s'" % op)
    tensor = Tensor(value, parents, None, op)
    if tensor.requires_grad:
        tensor.backward_fn = backward_fn
    else:
        # constant subgraph, nothing to record
        tensor.parents = ()
    return tensor


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back to the operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# elementwise arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value + b.value, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        'add'
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value - b.value, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        'sub'
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value * b.value, (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.shape),
            _unbroadcast(g * a.value, b.shape)
        ),
        'mul'
    )


def square(a):
    a = as_tensor(a)
    return _make(a.value ** 2, (a,), lambda g: (2.0 * a.value * g,),
                 'square')


# matrix ops

def matmul(a, b):
    """Matrix product of two 2-D tensors.

    :param Tensor a: Left operand (N x D)
    :param Tensor b: Right operand (D x M)
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(
            "matmul shape mismatch: %s @ %s" % (a.shape, b.shape)
        )
    return _make(
        a.value @ b.value, (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
        'matmul'
    )


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose expects a 2-D tensor, got %s" % (a.shape,))
    return _make(a.value.T, (a,), lambda g: (g.T,), 'transpose')


def reshape(a, shape):
    a = as_tensor(a)
    return _make(a.value.reshape(shape), (a,),
                 lambda g: (g.reshape(a.shape),), 'reshape')


def take(a, index):
    """Basic or advanced indexing; gradient is scattered back."""
    a = as_tensor(a)

    def backward(g):
        grad = np.zeros_like(a.value)
        np.add.at(grad, index, g)
        return (grad,)

    return _make(a.value[index], (a,), backward, 'take')


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    value = np.concatenate([t.value for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        value, tensors,
        lambda g: tuple(np.split(g, splits, axis=axis)),
        'concat'
    )


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    value = np.stack([t.value for t in tensors], axis=axis)
    return _make(
        value, tensors,
        lambda g: tuple(
            np.take(g, i, axis=axis) for i in range(len(tensors))
        ),
        'stack'
    )


# reductions

def sum(a, axis=None, keepdims=False):
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(a.value.sum(axis=axis, keepdims=keepdims), (a,), backward,
                 'sum')


def mean(a, axis=None):
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / count)


def sum_squares(a):
    return sum(square(a))


# nonlinearities

def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.value)
    return _make(y, (a,), lambda g: (g * (1.0 - y ** 2),), 'tanh')


def sigmoid(a):
    a = as_tensor(a)
    # stable for large |x|
    y = np.exp(-np.logaddexp(0.0, -a.value))
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),), 'sigmoid')


def relu(a):
    a = as_tensor(a)
    return _make(np.maximum(a.value, 0.0), (a,),
                 lambda g: (g * (a.value > 0.0),), 'relu')


def softmax(a, axis=-1):
    """Softmax along an axis, computed with max-subtraction."""
    a = as_tensor(a)
    if a.size == 0:
        raise ShapeError("softmax of an empty vector")
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    return _make(
        y, (a,),
        lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),),
        'softmax'
    )


def log_softmax(a, axis=-1, mask=None):
    """Log-softmax along an axis.

    Entries where ``mask`` is False are excluded from the normalizer; their
    output is 0 and they receive no gradient.

    :param Tensor a: Input scores
    :param int axis: Normalization axis
    :param ndarray mask: Optional boolean mask, broadcastable to ``a``
    """
    a = as_tensor(a)
    if mask is None:
        mask = np.ones(a.shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    if not np.all(mask.any(axis=axis)):
        raise ShapeError("log_softmax row without any unmasked entry")
    masked = np.where(mask, a.value, -np.inf)
    top = masked.max(axis=axis, keepdims=True)
    lse = top + np.log(
        np.where(mask, np.exp(masked - top), 0.0).sum(axis=axis,
                                                       keepdims=True)
    )
    y = np.where(mask, a.value - lse, 0.0)
    p = np.where(mask, np.exp(y), 0.0)

    def backward(g):
        g = np.where(mask, g, 0.0)
        return (np.where(mask, g - p * g.sum(axis=axis, keepdims=True), 0.0),)

    return _make(y, (a,), backward, 'log_softmax')


def normalize(a, axis=-1, eps=None):
    """Scale vectors along ``axis`` to unit L2 norm.

    Without ``eps`` a zero vector raises NumericalError. With ``eps`` the
    norm is clamped to ``max(norm, eps)`` and a zero vector maps to zero.
    """
    a = as_tensor(a)
    norm = np.sqrt((a.value ** 2).sum(axis=axis, keepdims=True))
    if eps is None:
        if np.any(norm == 0.0):
            raise NumericalError(
                "Cosine similarity is undefined for a zero vector"
            )
        clamped = np.zeros(norm.shape, dtype=bool)
    else:
        clamped = norm < eps
        norm = np.maximum(norm, eps)
    y = a.value / norm

    def backward(g):
        # clamped rows only scale by 1/eps
        radial = np.where(clamped, 0.0, y * (g * y).sum(axis=axis,
                                                        keepdims=True))
        return ((g - radial) / norm,)

    return _make(y, (a,), backward, 'normalize')


def cosine_similarity(a, b):
    """Cosine similarity of two vectors (or row-wise for matrices)."""
    return sum(mul(normalize(a), normalize(b)), axis=-1)


def cosine_similarity_matrix(z, eps=None):
    """Pairwise cosine similarities between the rows of ``z``.

    :param float eps: Lower bound of the row norms (None: zero rows raise)
    """
    unit = normalize(z, axis=1, eps=eps)
    return matmul(unit, transpose(unit))


def cross_entropy(logits, labels):
    """Mean cross-entropy of integer class ``labels`` (0-based)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=int)
    log_p = log_softmax(logits, axis=1)
    picked = take(log_p, (np.arange(len(labels)), labels))
    return mul(mean(picked), -1.0)


def l2_penalty(parameters):
    """Sum of squares over all parameters (||Θ||²)."""
    total = constant(0.0)
    for parameter in parameters:
        total = add(total, sum_squares(parameter))
    return total


# backpropagation

def _topological_order(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss, parameters=None):
    """Propagate d(loss) back through the tape.

    Gradients of the given parameters are reset first, so parameters the loss
    does not reach end with a zero gradient.

    :param Tensor loss: Scalar loss node
    :param list parameters: Parameters whose gradients are (re)populated
    """
    if loss.size != 1:
        raise ShapeError("backward needs a scalar loss, got shape %s"
                         % (loss.shape,))
    for parameter in parameters or []:
        parameter.zero_grad()
    if not loss.requires_grad:
        return

    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topological_order(loss)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if isinstance(node, Parameter):
            node.grad = node.grad + grad
        if node.backward_fn is None:
            continue
        for parent, parent_grad in zip(node.parents,
                                       node.backward_fn(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + parent_grad
            else:
                grads[id(parent)] = parent_grad


# initialization

def uniform_parameter(name, shape, bound, rng):
    """Parameter drawn from uniform(-bound, bound).

    :param str name: Parameter name
    :param tuple shape: Shape
    :param float bound: Half-width of the interval
    :param Generator rng: Seeded numpy generator
    """
    return Parameter(name, rng.uniform(-bound, bound, size=shape))


def zeros_parameter(name, shape):
    return Parameter(name, np.zeros(shape))


def parameter_count(parameters):
    return int(np.sum([p.size for p in parameters]))
