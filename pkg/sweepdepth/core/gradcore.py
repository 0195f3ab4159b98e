"""
Diferenciação reversa sobre grades densas.

Cada operação grava um nó na fita (Tape) com fechamentos que levam o adjunto
da saída ao adjunto de cada entrada. O passo reverso percorre a fita em ordem
inversa de gravação, uma única vez por nó. Todos os valores são float64.
"""
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from sweepdepth.core.errors import DegenerateError, NumericalError

logger = logging.getLogger(__name__)

DIVISOR_EPS = 1e-12
# Coordenadas a menos disso da borda ainda contam como dentro da imagem.
SAMPLE_TOL = 1e-9
ELEMENTWISE_KINDS = ('add', 'sub', 'mul', 'div', 'exp', 'ln', 'pow', 'abs', 'clamp')

Vjp = Callable[[np.ndarray], np.ndarray]


class DiffValue:
    """
    Nó da fita: valor imutável, adjunto acumulado e referências às entradas.
    """
    __slots__ = ('value', 'adjoint', 'parents', 'tape', 'requires_grad', 'name')

    def __init__(self, value, tape: 'Tape', parents: Tuple[Tuple['DiffValue', Vjp], ...] = (),
                 requires_grad: bool = False, name: Optional[str] = None):
        value = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"Valor não finito produzido por '{name or 'entrada'}'.")
        value.setflags(write=False)
        self.value = value
        self.adjoint = np.zeros_like(value)
        self.parents = parents
        self.tape = tape
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"DiffValue(name={self.name!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return elementwise('add', self, other)

    def __radd__(self, other):
        return elementwise('add', other, self)

    def __sub__(self, other):
        return elementwise('sub', self, other)

    def __rsub__(self, other):
        return elementwise('sub', other, self)

    def __mul__(self, other):
        return elementwise('mul', self, other)

    def __rmul__(self, other):
        return elementwise('mul', other, self)

    def __truediv__(self, other):
        return elementwise('div', self, other)

    def __rtruediv__(self, other):
        return elementwise('div', other, self)

    def __neg__(self):
        return elementwise('mul', self, -1.0)

    def __pow__(self, other):
        return elementwise('pow', self, other)

    def __getitem__(self, index):
        return getitem(self, index)


Operand = Union[DiffValue, np.ndarray, float, int]


class Tape:
    """
    Lista ordenada de operações. Não deve ser compartilhada entre ajustes simultâneos.
    """

    def __init__(self):
        self._nodes: List[DiffValue] = []
        self._leaves: List[DiffValue] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def variable(self, value, name: Optional[str] = None) -> DiffValue:
        """
        Cria uma folha diferenciável.

        :param value: Valor inicial
        :param name: Nome para mensagens de erro
        :return: DiffValue com requires_grad=True
        """
        leaf = DiffValue(value, self, (), requires_grad=True, name=name)
        self._leaves.append(leaf)
        return leaf

    def constant(self, value, name: Optional[str] = None) -> DiffValue:
        return DiffValue(value, self, (), requires_grad=False, name=name)

    def record(self, value, parents: Sequence[Tuple[DiffValue, Vjp]], name: str) -> DiffValue:
        live = tuple((parent, vjp) for parent, vjp in parents if parent.requires_grad)
        node = DiffValue(value, self, live, requires_grad=bool(live), name=name)
        if live:
            self._nodes.append(node)
        return node

    def backward(self, loss: DiffValue) -> None:
        """
        Propaga adjuntos a partir de uma perda escalar.

        :param loss: Nó escalar gravado nesta fita
        """
        if loss.tape is not self:
            raise ValueError("A perda pertence a outra fita.")
        if loss.value.size != 1:
            raise ValueError(f"backward exige uma perda escalar, recebeu forma {loss.shape}.")

        for node in self._nodes:
            node.adjoint.fill(0.0)
        for leaf in self._leaves:
            leaf.adjoint.fill(0.0)
        loss.adjoint.fill(1.0)

        for node in reversed(self._nodes):
            if not node.adjoint.any():
                continue
            for parent, vjp in node.parents:
                contribution = _unbroadcast(np.asarray(vjp(node.adjoint), dtype=np.float64), parent.shape)
                if not np.all(np.isfinite(contribution)):
                    raise NumericalError(f"Adjunto não finito ao retropropagar '{node.name}'.")
                parent.adjoint += contribution


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def tape_of(*operands) -> Tape:
    tapes = {id(op.tape): op.tape for op in operands if isinstance(op, DiffValue)}
    if len(tapes) > 1:
        raise ValueError("Operandos pertencem a fitas diferentes.")
    if tapes:
        return next(iter(tapes.values()))
    return Tape()


def lift(value: Operand, tape: Tape) -> DiffValue:
    if isinstance(value, DiffValue):
        return value
    return tape.constant(value)


def elementwise(kind: str, a: Operand, b: Optional[Operand] = None, *,
                lo: Optional[float] = None, hi: Optional[float] = None) -> DiffValue:
    """
    Operação ponto a ponto com broadcasting (escalar↔grade, 1×H×W↔N×H×W).

    :param kind: Um de add, sub, mul, div, exp, ln, pow, abs, clamp
    :param a: Primeiro operando
    :param b: Segundo operando (operações binárias)
    :param lo: Limite inferior de clamp
    :param hi: Limite superior de clamp
    :return: Novo DiffValue
    """
    if kind not in ELEMENTWISE_KINDS:
        raise ValueError(f"Operação desconhecida: {kind}")
    tape = tape_of(a, b)
    a = lift(a, tape)
    av = a.value

    if kind in ('add', 'sub', 'mul', 'div', 'pow'):
        if b is None:
            raise ValueError(f"A operação {kind} exige dois operandos.")
        b = lift(b, tape)
        bv = b.value
        try:
            np.broadcast_shapes(av.shape, bv.shape)
        except ValueError as exc:
            raise ValueError(f"Formas incompatíveis para {kind}: {av.shape} e {bv.shape}") from exc

    if kind == 'add':
        return tape.record(av + bv, [(a, lambda g: g), (b, lambda g: g)], 'add')
    if kind == 'sub':
        return tape.record(av - bv, [(a, lambda g: g), (b, lambda g: -g)], 'sub')
    if kind == 'mul':
        return tape.record(av * bv, [(a, lambda g: g * bv), (b, lambda g: g * av)], 'mul')
    if kind == 'div':
        if np.any(np.abs(bv) < DIVISOR_EPS):
            raise DegenerateError("degenerate divisor: |b| < 1e-12")
        return tape.record(av / bv, [(a, lambda g: g / bv), (b, lambda g: -g * av / (bv * bv))], 'div')
    if kind == 'exp':
        out = np.exp(av)
        return tape.record(out, [(a, lambda g: g * out)], 'exp')
    if kind == 'ln':
        if np.any(av <= 0.0):
            raise NumericalError("ln de valor não positivo")
        return tape.record(np.log(av), [(a, lambda g: g / av)], 'ln')
    if kind == 'pow':
        return _pow(tape, a, b)
    if kind == 'abs':
        return tape.record(np.abs(av), [(a, lambda g: g * np.sign(av))], 'abs')

    # clamp
    low = -np.inf if lo is None else lo
    high = np.inf if hi is None else hi
    inside = (av >= low) & (av <= high)
    return tape.record(np.clip(av, low, high), [(a, lambda g: g * inside)], 'clamp')


def _pow(tape: Tape, a: DiffValue, b: DiffValue) -> DiffValue:
    av, bv = np.broadcast_arrays(a.value, b.value)
    negative = av < 0.0
    if np.any(negative & (bv != np.round(bv))):
        raise NumericalError("pow com base negativa e expoente não inteiro")
    if np.any((av == 0.0) & (bv < 0.0)):
        raise DegenerateError("degenerate divisor: base zero com expoente negativo")
    out = np.power(av, bv)

    def grad_base(g):
        with np.errstate(divide='ignore', invalid='ignore'):
            local = bv * np.power(av, bv - 1.0)
        local = np.where(bv == 0.0, 0.0, local)
        if not np.all(np.isfinite(local)):
            raise NumericalError("Derivada de pow indefinida em base zero.")
        return g * local

    def grad_exponent(g):
        if np.any(negative):
            raise NumericalError("Derivada de pow no expoente indefinida para base negativa.")
        with np.errstate(divide='ignore', invalid='ignore'):
            local = np.where(av > 0.0, out * np.log(np.where(av > 0.0, av, 1.0)), 0.0)
        return g * local

    return tape.record(out, [(a, grad_base), (b, grad_exponent)], 'pow')


def add(a: Operand, b: Operand) -> DiffValue:
    return elementwise('add', a, b)


def sub(a: Operand, b: Operand) -> DiffValue:
    return elementwise('sub', a, b)


def mul(a: Operand, b: Operand) -> DiffValue:
    return elementwise('mul', a, b)


def div(a: Operand, b: Operand) -> DiffValue:
    return elementwise('div', a, b)


def exp(a: Operand) -> DiffValue:
    return elementwise('exp', a)


def ln(a: Operand) -> DiffValue:
    return elementwise('ln', a)


def power(a: Operand, b: Operand) -> DiffValue:
    return elementwise('pow', a, b)


def absolute(a: Operand) -> DiffValue:
    return elementwise('abs', a)


def clamp(a: Operand, lo: Optional[float] = None, hi: Optional[float] = None) -> DiffValue:
    return elementwise('clamp', a, lo=lo, hi=hi)


def tanh(a: Operand) -> DiffValue:
    tape = tape_of(a)
    a = lift(a, tape)
    out = np.tanh(a.value)
    return tape.record(out, [(a, lambda g: g * (1.0 - out * out))], 'tanh')


def softplus(a: Operand) -> DiffValue:
    """
    log(1 + e^x), estável para |x| grande.
    """
    tape = tape_of(a)
    a = lift(a, tape)
    av = a.value
    out = np.logaddexp(0.0, av)
    sigmoid = np.exp(-np.logaddexp(0.0, -av))
    return tape.record(out, [(a, lambda g: g * sigmoid)], 'softplus')


def reduce_sum(a: Operand, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> DiffValue:
    tape = tape_of(a)
    a = lift(a, tape)
    shape = a.shape
    out = np.sum(a.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else axis
            axes = tuple(ax % len(shape) for ax in axes)
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
        return np.broadcast_to(g, shape)

    return tape.record(out, [(a, vjp)], 'sum')


def reduce_mean(a: Operand, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> DiffValue:
    tape = tape_of(a)
    a = lift(a, tape)
    total = reduce_sum(a, axis=axis, keepdims=keepdims)
    count = a.value.size // max(total.value.size, 1)
    return total * (1.0 / count)


def reshape(a: Operand, shape: Tuple[int, ...]) -> DiffValue:
    tape = tape_of(a)
    a = lift(a, tape)
    original = a.shape
    return tape.record(a.value.reshape(shape), [(a, lambda g: g.reshape(original))], 'reshape')


def expand_dims(a: Operand, axis: int) -> DiffValue:
    tape = tape_of(a)
    a = lift(a, tape)
    return reshape(a, np.expand_dims(a.value, axis).shape)


def getitem(a: Operand, index) -> DiffValue:
    tape = tape_of(a)
    a = lift(a, tape)
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return full

    return tape.record(a.value[index], [(a, vjp)], 'getitem')


def stack(values: Sequence[Operand], axis: int = 0) -> DiffValue:
    tape = tape_of(*values)
    values = [lift(v, tape) for v in values]
    out = np.stack([v.value for v in values], axis=axis)
    parents = [(v, (lambda i: lambda g: np.take(g, i, axis=axis))(i)) for i, v in enumerate(values)]
    return tape.record(out, parents, 'stack')


def concat(values: Sequence[Operand], axis: int = 0) -> DiffValue:
    tape = tape_of(*values)
    values = [lift(v, tape) for v in values]
    out = np.concatenate([v.value for v in values], axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in values])

    def make_vjp(start, stop):
        def vjp(g):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            return g[tuple(index)]
        return vjp

    parents = [(v, make_vjp(bounds[i], bounds[i + 1])) for i, v in enumerate(values)]
    return tape.record(out, parents, 'concat')


def channel_softmax(logits: Operand, axis: int = 0) -> DiffValue:
    """
    Softmax por canal, estabilizado pela subtração do máximo por pixel.

    :param logits: Volume N×H×W (ou qualquer forma com N no eixo indicado)
    :param axis: Eixo dos canais
    :return: Probabilidades que somam 1 por pixel
    """
    tape = tape_of(logits)
    logits = lift(logits, tape)
    if logits.shape[axis] < 2:
        raise ValueError("channel_softmax exige ao menos 2 canais.")
    shifted = logits.value - np.max(logits.value, axis=axis, keepdims=True)
    weights = np.exp(shifted)
    probabilities = weights / np.sum(weights, axis=axis, keepdims=True)

    def vjp(g):
        return probabilities * (g - np.sum(g * probabilities, axis=axis, keepdims=True))

    return tape.record(probabilities, [(logits, vjp)], 'channel_softmax')


def _bilinear(tape: Tape, src: DiffValue, coords: DiffValue, src4: np.ndarray, per_batch: bool,
              out_shape: Tuple[int, ...]) -> Tuple[DiffValue, np.ndarray]:
    """
    Núcleo comum: src4 tem forma (Bs, H, W, C) com Bs = 1 (fonte compartilhada) ou
    Bs = B (uma fonte por lote); coords tem forma (B, Ho, Wo, 2) em pixels (x, y).
    """
    height, width = src4.shape[1:3]
    cv = coords.value.reshape((-1,) + coords.shape[-3:]) if coords.ndim == 4 else coords.value[None]
    valid = ((cv[..., 0] >= -SAMPLE_TOL) & (cv[..., 0] <= width - 1 + SAMPLE_TOL)
             & (cv[..., 1] >= -SAMPLE_TOL) & (cv[..., 1] <= height - 1 + SAMPLE_TOL))
    x = np.clip(cv[..., 0], 0.0, width - 1)
    y = np.clip(cv[..., 1], 0.0, height - 1)

    x0 = np.clip(np.floor(x), 0, max(width - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(y), 0, max(height - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    wx = np.where(valid, x - x0, 0.0)
    wy = np.where(valid, y - y0, 0.0)
    mask = valid.astype(np.float64)

    if per_batch:
        batch = np.broadcast_to(np.arange(cv.shape[0])[:, None, None], x0.shape)
    else:
        batch = np.zeros_like(x0)

    v00 = src4[batch, y0, x0]
    v01 = src4[batch, y0, x1]
    v10 = src4[batch, y1, x0]
    v11 = src4[batch, y1, x1]
    wx_c = wx[..., None]
    wy_c = wy[..., None]
    m_c = mask[..., None]
    top = (1.0 - wx_c) * v00 + wx_c * v01
    bottom = (1.0 - wx_c) * v10 + wx_c * v11
    out = ((1.0 - wy_c) * top + wy_c * bottom) * m_c

    src_shape = src.shape

    def grad_src(g):
        g = g.reshape(out.shape) * m_c
        full = np.zeros(src4.shape)
        np.add.at(full, (batch, y0, x0), g * (1.0 - wx_c) * (1.0 - wy_c))
        np.add.at(full, (batch, y0, x1), g * wx_c * (1.0 - wy_c))
        np.add.at(full, (batch, y1, x0), g * (1.0 - wx_c) * wy_c)
        np.add.at(full, (batch, y1, x1), g * wx_c * wy_c)
        return full.reshape(src_shape)

    coords_shape = coords.shape

    def grad_coords(g):
        g = g.reshape(out.shape) * m_c
        d_x = np.sum(g * ((1.0 - wy_c) * (v01 - v00) + wy_c * (v11 - v10)), axis=-1)
        d_y = np.sum(g * ((1.0 - wx_c) * (v10 - v00) + wx_c * (v11 - v01)), axis=-1)
        return np.stack([d_x, d_y], axis=-1).reshape(coords_shape)

    node = tape.record(out.reshape(out_shape), [(src, grad_src), (coords, grad_coords)], 'bilinear_sample')
    return node, valid.reshape(coords.shape[:-1]).astype(np.float64)


def bilinear_sample(src: Operand, coords: Operand) -> Tuple[DiffValue, np.ndarray]:
    """
    Interpolação bilinear de uma imagem em coordenadas contínuas (x, y) em pixels.

    Amostras fora da imagem valem 0 e recebem validade 0. Os adjuntos fluem para
    a imagem e para as coordenadas.

    :param src: Imagem H×W ou H×W×C
    :param coords: Coordenadas (..., 2); prefixos extras (ex.: N×H×W×2) reutilizam a mesma imagem
    :return: (amostras com forma coords.shape[:-1] (+ C), validade 0/1)
    """
    tape = tape_of(src, coords)
    src = lift(src, tape)
    coords = lift(coords, tape)
    if coords.shape[-1] != 2 or coords.ndim not in (3, 4):
        raise ValueError(f"coords deve ter forma (Ho, Wo, 2) ou (B, Ho, Wo, 2), recebeu {coords.shape}")
    if src.ndim == 2:
        src4 = src.value[None, :, :, None]
        out_shape = coords.shape[:-1]
    elif src.ndim == 3:
        src4 = src.value[None]
        out_shape = coords.shape[:-1] + (src.shape[-1],)
    else:
        raise ValueError(f"src deve ter forma H×W ou H×W×C, recebeu {src.shape}")
    return _bilinear(tape, src, coords, src4, per_batch=False, out_shape=out_shape)


def sample_volume(volume: Operand, coords: Operand) -> Tuple[DiffValue, np.ndarray]:
    """
    Amostra cada canal n de um volume N×H×W com suas próprias coordenadas coords[n].
    """
    tape = tape_of(volume, coords)
    volume = lift(volume, tape)
    coords = lift(coords, tape)
    if volume.ndim != 3 or coords.ndim != 4 or coords.shape[0] != volume.shape[0]:
        raise ValueError(f"Formas incompatíveis: volume {volume.shape}, coords {coords.shape}")
    return _bilinear(tape, volume, coords, volume.value[..., None], per_batch=True,
                     out_shape=coords.shape[:-1])


def conv2d(x: Operand, weight: np.ndarray, stride: int = 2, padding: int = 1) -> DiffValue:
    """
    Convolução 2D (correlação) com pesos fixos; diferenciável apenas na entrada.

    :param x: Mapa H×W×Cin
    :param weight: Pesos k×k×Cin×Cout
    :return: Mapa Ho×Wo×Cout
    """
    tape = tape_of(x)
    x = lift(x, tape)
    height, width, _ = x.shape
    k = weight.shape[0]
    padded = np.pad(x.value, ((padding, padding), (padding, padding), (0, 0)))
    out_h = (height + 2 * padding - k) // stride + 1
    out_w = (width + 2 * padding - k) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ValueError(f"Entrada {x.shape} pequena demais para o kernel {k}.")
    rows = (np.arange(out_h) * stride)[:, None] + np.arange(k)[None, :]
    cols = (np.arange(out_w) * stride)[:, None] + np.arange(k)[None, :]
    index = (rows[:, None, :, None], cols[None, :, None, :])
    patches = padded[index]
    out = np.einsum('hwijc,ijco->hwo', patches, weight)

    def vjp(g):
        grad_patches = np.einsum('hwo,ijco->hwijc', g, weight)
        full = np.zeros(padded.shape)
        np.add.at(full, index, grad_patches)
        return full[padding:padding + height, padding:padding + width]

    return tape.record(out, [(x, vjp)], 'conv2d')


LossBuilder = Callable[[Tape, Dict[str, DiffValue]], DiffValue]


def check_gradients(loss_builder: LossBuilder, params: Dict[str, np.ndarray], h: float = 1e-6) -> float:
    """
    Compara adjuntos analíticos com diferenças centrais, entrada a entrada.

    :param loss_builder: Função (tape, variáveis) -> perda escalar
    :param params: Valores dos parâmetros por nome
    :param h: Passo da diferença finita
    :return: max |g_a - g_fd| / max(1, |g_a|, |g_fd|)
    """
    params = {name: np.array(value, dtype=np.float64) for name, value in params.items()}

    tape = Tape()
    variables = {name: tape.variable(value, name=name) for name, value in params.items()}
    loss = loss_builder(tape, variables)
    if not np.all(np.isfinite(loss.value)):
        raise NumericalError("Perda não finita na verificação de gradientes.")
    tape.backward(loss)
    analytic = {name: var.adjoint.copy() for name, var in variables.items()}

    def evaluate(name: str, flat_index: int, delta: float) -> float:
        probe = {key: value.copy() for key, value in params.items()}
        probe[name].reshape(-1)[flat_index] += delta
        probe_tape = Tape()
        probe_vars = {key: probe_tape.constant(value, name=key) for key, value in probe.items()}
        value = float(np.asarray(loss_builder(probe_tape, probe_vars).value).reshape(-1)[0])
        if not np.isfinite(value):
            raise NumericalError("Perda não finita na verificação de gradientes.")
        return value

    worst = 0.0
    for name, value in params.items():
        grad = analytic[name].reshape(-1)
        for flat_index in range(value.size):
            numeric = (evaluate(name, flat_index, h) - evaluate(name, flat_index, -h)) / (2.0 * h)
            error = abs(grad[flat_index] - numeric) / max(1.0, abs(grad[flat_index]), abs(numeric))
            worst = max(worst, error)
    logger.debug(f"check_gradients: erro relativo máximo {worst:.3e}")
    return worst
