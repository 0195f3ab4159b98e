"""
Hierarquia de exceções do sweepdepth e os códigos de saída da CLI associados.
"""


class SweepDepthError(Exception):
    """Erro base de todo o pacote."""

    exit_code = 1


class ConfigError(SweepDepthError, ValueError):
    """Configuração inválida (RunConfig, câmera, pose, aumento ou cena)."""

    exit_code = 2


class FormatError(SweepDepthError, ValueError):
    """Arquivo PFM/PPM/PGM malformado."""

    exit_code = 2


class NumericalError(SweepDepthError, ArithmeticError):
    """Valores não finitos, divergência ou falha na verificação de gradientes."""

    exit_code = 3


class DegenerateError(NumericalError):
    """Divisor, profundidade ou disparidade degenerados."""
