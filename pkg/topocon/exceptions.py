class TopoconError(Exception):
    """Exception de base du simulateur"""


class GraphError(TopoconError):
    """Erreur sur une opération de graphe"""


class DisconnectedGraphError(GraphError):
    """Graphe non connexe : excentricité infinie"""


class EdgeNotFoundError(GraphError):
    """Arête absente de l'ensemble d'arêtes"""


class DynamicsError(TopoconError):
    """Erreur lors de l'intégration de la dynamique"""


class NonFiniteStateError(DynamicsError):
    """État non fini après un pas d'intégration"""


class InvalidHorizonError(DynamicsError):
    """Instant de requête antérieur à l'instant connu"""


class InvalidParameterError(TopoconError):
    """Paramètre hors de son domaine de validité"""


class InconsistentRegionError(TopoconError):
    """Région d'incertitude vide : rapport incohérent avec les bornes"""


class InvariantViolationError(TopoconError):
    """Invariant de sûreté violé (connexité, diamètre)"""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class ScenarioError(TopoconError):
    """Scénario invalide"""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


class OutputWriteError(TopoconError):
    """Échec d'écriture d'un fichier de sortie"""

    def __init__(self, path, error):
        super().__init__(f"{path}: {error}")
        self.path = path
