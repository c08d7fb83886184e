"""Two-dimensional latent export for external plotting."""

from ..exceptions import ValidationError

HEADER = ("item_id", "view", "x1", "x2", "label")


def export_latent_2d(model, items, views, ids=None, labels=None):
    """First two latent coordinates of items observed in one or more views.

    ``items`` holds one raw batch per entry of ``views``; ``ids`` and
    ``labels`` (optional) are per-item and shared by every view. Returns
    rows ``(item_id, view, x1, x2, label)``.
    """
    if model.n_components_ < 2:
        raise ValidationError(f"need d >= 2 for a 2-D export, model has d={model.n_components_}")
    if len(items) != len(views):
        raise ValidationError(f"{len(items)} item batches for {len(views)} views")
    rows = []
    for batch, view in zip(items, views):
        Z = model.transform_view(batch, view)
        n = Z.shape[0]
        item_ids = list(range(n)) if ids is None else list(ids)
        item_labels = [""] * n if labels is None else list(labels)
        if len(item_ids) != n or len(item_labels) != n:
            raise ValidationError(f"view {view!r} has {n} items but ids/labels differ in length")
        name = view if isinstance(view, str) else (
            model.view_names[view] if model.view_names else str(view))
        for i, z, lab in zip(item_ids, Z, item_labels):
            rows.append((i, name, float(z[0]), float(z[1]), lab))
    return rows


def write_tsv(path_or_fh, rows, header=HEADER):
    lines = ["\t".join(header) + "\n"] if header else []
    lines += ["\t".join(repr(v) if isinstance(v, float) else str(v) for v in r) + "\n"
              for r in rows]
    if hasattr(path_or_fh, "write"):
        path_or_fh.writelines(lines)
        return
    with open(path_or_fh, "w", encoding="utf-8") as fh:
        fh.writelines(lines)
