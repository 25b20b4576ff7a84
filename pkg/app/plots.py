"""
SVG 图：轨迹对比、预测区域和训练曲线。

只用折线、多边形和文字元素拼出图形，输出由 ElementTree 序列化，保证是
结构合法的 XML。
"""
import math
import xml.etree.ElementTree as ET

import numpy as np

SVG_NS = 'http://www.w3.org/2000/svg'
PALETTE = {
    'obs': '#555555',
    'truth': '#000000',
    'pcmp': '#d62728',
    'lstm': '#1f77b4',
    'ctrv': '#2ca02c',
    'region': '#ff7f0e',
}
EXTRA_COLORS = ('#9467bd', '#8c564b', '#e377c2', '#17becf', '#bcbd22')


class SvgCanvas:
    """把数据坐标线性映射到画布像素，y 轴向上。"""

    def __init__(self, bounds, width=640, height=480, margin=40, equal_aspect=True):
        xmin, xmax, ymin, ymax = bounds
        if not (math.isfinite(xmin) and math.isfinite(xmax) and math.isfinite(ymin) and math.isfinite(ymax)):
            xmin, xmax, ymin, ymax = 0.0, 1.0, 0.0, 1.0
        if xmax - xmin < 1e-9:
            xmin, xmax = xmin - 0.5, xmax + 0.5
        if ymax - ymin < 1e-9:
            ymin, ymax = ymin - 0.5, ymax + 0.5
        self.width, self.height, self.margin = width, height, margin
        sx = (width - 2 * margin) / (xmax - xmin)
        sy = (height - 2 * margin) / (ymax - ymin)
        if equal_aspect:
            sx = sy = min(sx, sy)
        self.sx, self.sy = sx, sy
        self.xmin, self.ymin = xmin, ymin
        self.root = ET.Element('svg', {
            'xmlns': SVG_NS, 'width': str(width), 'height': str(height),
            'viewBox': f'0 0 {width} {height}'})
        ET.SubElement(self.root, 'rect', {'x': '0', 'y': '0', 'width': str(width), 'height': str(height),
                                          'fill': 'white'})

    def _xy(self, points):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        px = self.margin + (points[:, 0] - self.xmin) * self.sx
        py = self.height - self.margin - (points[:, 1] - self.ymin) * self.sy
        return ' '.join(f'{x:.2f},{y:.2f}' for x, y in zip(px, py) if math.isfinite(x) and math.isfinite(y))

    def polyline(self, points, color='#000000', width=1.5, dashed=False, opacity=1.0):
        attrs = {'points': self._xy(points), 'fill': 'none', 'stroke': color, 'stroke-width': str(width),
                 'stroke-opacity': str(opacity)}
        if dashed:
            attrs['stroke-dasharray'] = '4 3'
        return ET.SubElement(self.root, 'polyline', attrs)

    def polygon(self, points, color='#ff7f0e', opacity=0.15):
        return ET.SubElement(self.root, 'polygon', {
            'points': self._xy(points), 'fill': color, 'fill-opacity': str(opacity),
            'stroke': color, 'stroke-opacity': str(min(1.0, 3 * opacity)), 'stroke-width': '0.5'})

    def text(self, x, y, content, size=12, color='#000000'):
        node = ET.SubElement(self.root, 'text', {'x': f'{x:.1f}', 'y': f'{y:.1f}', 'font-size': str(size),
                                                  'font-family': 'sans-serif', 'fill': color})
        node.text = str(content)
        return node

    def legend(self, entries):
        for i, (label, color) in enumerate(entries):
            y = self.margin / 2 + 14 * i
            ET.SubElement(self.root, 'line', {'x1': str(self.width - 140), 'y1': f'{y - 4:.1f}',
                                              'x2': str(self.width - 120), 'y2': f'{y - 4:.1f}',
                                              'stroke': color, 'stroke-width': '2'})
            self.text(self.width - 115, y, label, size=11)

    def save(self, path):
        ET.ElementTree(self.root).write(path, encoding='utf-8', xml_declaration=True)
        return path


def _bounds(*arrays, pad=0.05):
    pts = np.concatenate([np.asarray(a, dtype=np.float64).reshape(-1, 2) for a in arrays if np.size(a)])
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if pts.size == 0:
        return 0.0, 1.0, 0.0, 1.0
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-6) * pad
    return lo[0] - span[0], hi[0] + span[0], lo[1] - span[1], hi[1] + span[1]


def color_of(name, index=0):
    return PALETTE.get(name, EXTRA_COLORS[index % len(EXTRA_COLORS)])


def plot_trajectories(path, obs, truth, predictions, title=None):
    """
    单个样本的观测、真值与各预测头的轨迹。

    :param obs: (l, ≥2)
    :param truth: (n, ≥2)
    :param predictions: {预测头: (n, ≥2)}
    """
    obs, truth = np.asarray(obs)[:, :2], np.asarray(truth)[:, :2]
    preds = {name: np.asarray(p)[:, :2] for name, p in predictions.items()}
    canvas = SvgCanvas(_bounds(obs, truth, *preds.values()))
    canvas.polyline(obs, PALETTE['obs'], width=2.5)
    canvas.polyline(np.vstack([obs[-1:], truth]), PALETTE['truth'], width=2)
    entries = [('observed', PALETTE['obs']), ('truth', PALETTE['truth'])]
    for i, (name, p) in enumerate(preds.items()):
        color = color_of(name, i)
        canvas.polyline(np.vstack([obs[-1:], p]), color, dashed=True)
        entries.append((name, color))
    canvas.legend(entries)
    if title:
        canvas.text(canvas.margin, canvas.margin / 2, title, size=13)
    return canvas.save(path)


def plot_regions(path, polygons, pred, truth, obs=None, every=5, title=None):
    """
    预测区域：每隔 every 步画一个多边形，叠加预测与真值。

    :param polygons: (n, m, 2)
    """
    polygons = np.asarray(polygons, dtype=np.float64)
    pred, truth = np.asarray(pred)[:, :2], np.asarray(truth)[:, :2]
    extra = [] if obs is None else [np.asarray(obs)[:, :2]]
    canvas = SvgCanvas(_bounds(polygons, pred, truth, *extra))
    for k in range(0, len(polygons), max(1, every)):
        canvas.polygon(polygons[k], PALETTE['region'])
    canvas.polygon(polygons[-1], PALETTE['region'])
    if obs is not None:
        canvas.polyline(extra[0], PALETTE['obs'], width=2.5)
    canvas.polyline(truth, PALETTE['truth'], width=2)
    canvas.polyline(pred, PALETTE['pcmp'], dashed=True)
    canvas.legend([('region', PALETTE['region']), ('truth', PALETTE['truth']), ('prediction', PALETTE['pcmp'])])
    if title:
        canvas.text(canvas.margin, canvas.margin / 2, title, size=13)
    return canvas.save(path)


def plot_loss_curves(path, histories, title=None):
    """
    训练损失与验证 ADE 随轮次的变化；两条曲线各自归一化到 [0, 1] 画在同一张图上。

    :param histories: {名称: DataFrame(epoch, train_loss, val_ade, ...)}
    """
    canvas = SvgCanvas((0.0, 1.0, 0.0, 1.0), equal_aspect=False)
    canvas.polyline([[0, 0], [1, 0]], '#999999', width=1)
    canvas.polyline([[0, 0], [0, 1]], '#999999', width=1)
    entries = []
    for i, (name, history) in enumerate(histories.items()):
        color = color_of(name, i)
        epochs = history['epoch'].to_numpy(dtype=np.float64)
        span = max(epochs.max() - epochs.min(), 1.0) if len(epochs) else 1.0
        for column, dashed in (('train_loss', False), ('val_ade', True)):
            values = history[column].to_numpy(dtype=np.float64)
            ok = np.isfinite(values)
            if not ok.any():
                continue
            v = values[ok]
            scale = max(v.max() - v.min(), 1e-12)
            pts = np.stack([(epochs[ok] - epochs.min()) / span, (v - v.min()) / scale], axis=1)
            canvas.polyline(pts, color, dashed=dashed)
            entries.append((f'{name} {column}', color))
    canvas.legend(entries)
    canvas.text(canvas.margin, canvas.height - canvas.margin / 3, 'epoch (normalized)', size=11)
    if title:
        canvas.text(canvas.margin, canvas.margin / 2, title, size=13)
    return canvas.save(path)
