"""Deterministic template corpus generator.

Produces a labeled ticket-message corpus with per-class keyword pools and
shared sentence templates, plus a synonym table pairing each keyword with
an in-class variant. Classes are separable by their keyword pools while
sharing filler vocabulary, and one class can be down-sampled to recreate
the starved-class scenario the workbench is built to repair.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Dataset, Message
from .errors import DataError

# 15 topic pools of 12 base keywords each; pools are pairwise disjoint and
# disjoint from the template filler vocabulary (enforced by the test suite).
TOPIC_POOLS: tuple[tuple[str, ...], ...] = (
    ("ordenador", "pantalla", "teclado", "raton", "monitor", "portatil",
     "arranque", "reinicio", "bateria", "cargador", "altavoz", "microfono"),
    ("cuenta", "usuario", "contrasena", "acceso", "bloqueo", "registro",
     "alta", "perfil", "permiso", "sesion", "dominio", "credencial"),
    ("antivirus", "cifrado", "certificado", "token", "amenaza", "phishing",
     "malware", "parche", "vulnerabilidad", "auditoria", "respaldo", "clave"),
    ("impresora", "toner", "cartucho", "papel", "bandeja", "escaner",
     "atasco", "cola", "duplex", "tinta", "rodillo", "calibracion"),
    ("dock", "puerto", "hdmi", "adaptador", "cable", "usb",
     "ethernet", "senal", "conector", "replicador", "clavija", "enchufe"),
    ("documento", "plantilla", "informe", "expediente", "firma", "formulario",
     "anexo", "acta", "borrador", "sello", "membrete", "redaccion"),
    ("portal", "navegador", "pestana", "enlace", "url", "cookie",
     "captcha", "pagina", "marcador", "ventana", "boton", "icono"),
    ("fichero", "carpeta", "archivo", "descarga", "subida", "comprimido",
     "extension", "ruta", "unidad", "disco", "particion", "papelera"),
    ("vpn", "tunel", "movil", "tableta", "sincronizacion", "buzon",
     "smartphone", "itinerancia", "cobertura", "roaming", "apn", "terminal"),
    ("llamada", "videollamada", "reunion", "chat", "mensaje", "notificacion",
     "canal", "agenda", "convocatoria", "sala", "audio", "video"),
    ("programa", "codigo", "compilacion", "depuracion", "libreria", "subrutina",
     "variable", "bucle", "sentencia", "modulo", "fuente", "binario"),
    ("correo", "adjunto", "remitente", "destinatario", "spam", "casilla",
     "filtro", "reenvio", "cuarentena", "cabecera", "copia", "borrado"),
    ("donacion", "voluntario", "refugiado", "acogida", "alimento", "manta",
     "traslado", "alojamiento", "ucrania", "frontera", "convoy", "solidaridad"),
    ("internet", "fibra", "oficina", "sede", "delegacion", "caida",
     "interrupcion", "proveedor", "ancho", "banda", "latencia", "cableado"),
    ("integracion", "infojobs", "api", "webhook", "endpoint", "sincronismo",
     "exportacion", "importacion", "catalogo", "vacante", "candidatura", "oferta"),
)

TEMPLATES: tuple[str, ...] = (
    "solicita que se revise {k1} porque {k2} no responde desde ayer",
    "buenos dias tenemos una incidencia con {k1} y tambien con {k2}",
    "error al utilizar {k1} tras el cambio de {k2} esta manana",
    "telefono <numero> pide ayuda urgente con {k1} ya que {k2} falla",
    "no funciona {k1} desde el lunes y afecta al trabajo con {k2}",
    "se reporta un fallo de {k1} al intentar usar {k2} en remoto",
    "necesito que alguien mire {k1} porque da problemas junto a {k2}",
    "la persona usuaria indica que {k1} aparece degradado igual que {k2}",
)


def _pluralize(word: str) -> str:
    return word + ("s" if word[-1] in "aeiou" else "es")


def class_pool(topic_index: int) -> list[str]:
    """Full keyword pool of a topic: 12 base words plus their variants."""
    base = TOPIC_POOLS[topic_index]
    return list(base) + [_pluralize(w) for w in base]


def synonym_table(n_classes: int) -> dict[str, list[str]]:
    """Bidirectional base <-> variant pairs for the first n_classes pools."""
    table: dict[str, list[str]] = {}
    for ci in range(n_classes):
        for w in TOPIC_POOLS[ci]:
            table[w] = [_pluralize(w)]
            table[_pluralize(w)] = [w]
    return table


@dataclass(frozen=True)
class CorpusSpec:
    n_classes: int = 5
    class_size: int = 200
    sizes: tuple[int, ...] | None = None
    seed: int = 7
    downsample: tuple[str, int] | None = None  # (label, reduced size)
    name: str = "template-corpus"

    def __post_init__(self) -> None:
        if not (2 <= self.n_classes <= len(TOPIC_POOLS)):
            raise DataError(f"n_classes must be in [2, {len(TOPIC_POOLS)}], got {self.n_classes}")
        if self.sizes is not None and len(self.sizes) != self.n_classes:
            raise DataError("sizes must list one size per class")

    def resolved_sizes(self) -> tuple[int, ...]:
        sizes = self.sizes or tuple([self.class_size] * self.n_classes)
        if any(s < 2 for s in sizes):
            raise DataError("every class needs at least 2 messages")
        return sizes


def generate_corpus(spec: CorpusSpec) -> tuple[Dataset, dict[str, list[str]]]:
    """Deterministic corpus + synonym table for the given spec.

    Every message instantiates one template with two distinct keywords drawn
    uniformly from its class pool, so classes are linearly separable by
    keyword presence while sharing all filler words.
    """
    sizes = spec.resolved_sizes()
    labels = [f"T{i + 1}" for i in range(spec.n_classes)]
    down_label, down_size = spec.downsample if spec.downsample else (None, None)
    if down_label is not None and down_label not in labels:
        raise DataError(f"downsample class {down_label!r} not among {labels}")
    messages: list[Message] = []
    for ci, (label, size) in enumerate(zip(labels, sizes)):
        rng = random.Random(f"{spec.seed}/{label}")
        pool = class_pool(ci)
        keep = down_size if label == down_label else size
        if keep is not None and keep > size:
            raise DataError(f"downsample size {keep} exceeds class size {size} for {label}")
        for n in range(size):
            template = rng.choice(TEMPLATES)
            k1, k2 = rng.sample(pool, 2)
            text = template.format(k1=k1, k2=k2)
            messages.append(Message(id=f"{label}-{n:05d}", text=text, label=label))
        if keep is not None and keep < size:
            del messages[len(messages) - size + keep :]
    return Dataset(spec.name, messages), synonym_table(spec.n_classes)


def save_synonyms(table: Mapping[str, Sequence[str]], path: str | Path) -> None:
    doc = {"schema": 1, "kind": "synonyms", "terms": {k: list(v) for k, v in table.items()}}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, ensure_ascii=False, sort_keys=True), encoding="utf-8")


def load_synonyms(path: str | Path) -> dict[str, list[str]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"synonym file not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("kind") != "synonyms":
        raise DataError(f"{path}: not a synonym table file")
    return {k: list(v) for k, v in doc["terms"].items()}
