"""
命令行入口：生成数据、训练、校准、评估、轴距扫描和批量预测。

每个命令都把产物写进自己的输出目录，并附带 manifest.json 记录配置快照和
产物哈希。业务异常按类别映射为退出码（配置 2、数据 3、数值 4）。
"""
import functools
import json
import os
import sys
import time
from dataclasses import replace

import click
import numpy as np
import pandas as pd
from flask import Blueprint, current_app

from app.manifest import RunManifest
from app.plots import plot_loss_curves, plot_regions, plot_trajectories
from BaoXing.frames import LocalFrame
from BaoXing.regions import (KINDS, MODES, calibrate, compute_scores, coverage_report,
                             load_region, region_polygons, save_region)
from DongLi.feasibility import feasibility_rate
from DongLi.integrate import DynamicsConfig
from errors import DataError, DivergenceError, EmptyDatasetError, PcmpError
from FangZhen.generate import GenerationConfig, generate
from FangZhen.raceline import LABELS
from FangZhen.simulate import save_trace
from FangZhen.track import load_track, save_track
from ShenJing.layers import NetworkConfig
from TQ.tools import SPLITS, STRATUM_KEYS, load_dataset, save_dataset, write_dataset_manifest
from XunLian.loss import CurriculumSchedule
from XunLian.train import LOG_COLUMNS, TrainConfig, train
from YuCe.heads import NET_HEADS, NetModel, describe_intent, predict_batch
from YuCe.io import load_windows, write_predictions
from ZhiBiao.achieve import Footprint, convert_seconds, evaluate, pearson, save_reports

pcmp_bp = Blueprint('pcmp', __name__, cli_group=None)

CHECKPOINT_NAME = 'checkpoint.json'
EPOCH_LOG_NAME = 'epochs.csv'
# 轴距扫描的默认网格：0.0802, 0.0902, …, 1.5002
WHEELBASE_GRID = tuple(float(v) for v in np.round(0.0802 + 0.01 * np.arange(143), 4))


def exit_codes(f):
    """把业务异常转换为退出码，错误信息写日志并输出到 stderr。"""
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except PcmpError as e:
            current_app.logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"错误: {e}", err=True)
            sys.exit(e.exit_code)
    return wrapper


def _dynamics(wheelbase=None):
    dyn = DynamicsConfig.from_dict(current_app.config['DYNAMICS'])
    return dyn if wheelbase is None else dyn.with_wheelbase(float(wheelbase))


def _jobs(jobs):
    return max(1, int(jobs if jobs is not None else current_app.config['JOBS']))


def _snapshot(*sections):
    return {name: current_app.config[name] for name in sections}


def _split_path(data_dir, name):
    return os.path.join(data_dir, f'{name}.csv')


def _load_split(data_dir, name, required=True):
    path = _split_path(data_dir, name)
    if not os.path.exists(path):
        if required:
            raise DataError(f"数据目录 {data_dir} 中没有 {name}.csv")
        return None
    return load_dataset(path)


def _load_data_track(data_dir):
    info_path = os.path.join(data_dir, 'dataset.json')
    closed = True
    if os.path.exists(info_path):
        with open(info_path, 'r', encoding='utf-8') as f:
            closed = bool(json.load(f).get('track_closed', True))
    return load_track(os.path.join(data_dir, 'track.csv'), closed=closed)


def parse_filters(filters):
    """把 ('raceline=race', 'speed=0.75,1.0') 解析为 {字段: [取值, ...]}。"""
    conditions = {}
    for item in filters:
        key, sep, value = item.partition('=')
        if not sep or not key.strip() or not value.strip():
            raise DataError(f"筛选条件必须写成 key=value，当前 '{item}'")
        conditions[key.strip()] = [v.strip() for v in value.split(',') if v.strip()]
    return conditions


def _load_model(path):
    """读取检查点，并按其中记录的轴距构造动力学配置。"""
    model, meta, optimizer = NetModel.load(path)
    dyn = _dynamics(meta.get('wheelbase'))
    return model, meta, optimizer, dyn


def _echo_elapsed(label, start):
    hours, minutes, seconds = convert_seconds(time.time() - start)
    current_app.logger.info(f"{label}耗时 {hours}小时{minutes}分钟{seconds}秒")


# --- gen-data ---

def stratum_table(splits, ratios):
    """每个分层在各划分中的样本数，以及验证/测试占比是否落在取整允许的范围内。"""
    counts = {name: ds.strata.groupby(list(STRATUM_KEYS), sort=True).size() for name, ds in splits.items()
              if len(ds)}
    table = pd.DataFrame(counts).fillna(0).astype(int)
    for name in SPLITS:
        if name not in table.columns:
            table[name] = 0
    table = table[list(SPLITS)]
    table['total'] = table.sum(axis=1)
    table['ok'] = True
    for k, name in enumerate(SPLITS[1:], start=1):
        expected = (table['total'] * ratios[k]).round()
        table['ok'] &= (table[name] - expected).abs() <= 1
    return table.reset_index()


@pcmp_bp.cli.command('gen-data')
@click.option('--out', 'out_dir', default='data', show_default=True, type=click.Path(file_okay=False),
              help='数据集输出目录')
@click.option('--seed', type=int, default=None, help='覆盖 DATA.seed')
@click.option('--racelines', default=None, help=f'逗号分隔的路线子集，可选 {",".join(LABELS)}')
@click.option('--duration', type=float, default=None, help='覆盖每个单元的仿真时长（秒）')
@click.option('--jobs', type=int, default=None, help='并行仿真的线程数上限')
@exit_codes
def gen_data(out_dir, seed, racelines, duration, jobs):
    """按 (路线, 控制器, 速度) 单元仿真并切出 train/val/test 数据集。"""
    section = dict(current_app.config['DATA'])
    if seed is not None:
        section['seed'] = seed
    if racelines:
        section['racelines'] = [s.strip() for s in racelines.split(',') if s.strip()]
    if duration is not None:
        section['duration'] = duration
    cfg = GenerationConfig.from_dict(section)
    dyn = _dynamics()
    manifest = RunManifest('gen-data', {'DATA': section, 'DYNAMICS': current_app.config['DYNAMICS']},
                           seed=cfg.seed)
    current_app.logger.info(f"开始生成数据: {len(cfg.cells())} 个单元 -> {out_dir}")

    start = time.time()
    track, traces, splits = generate(cfg, dyn.bicycle, dyn.integrator, dyn.bounds, jobs=_jobs(jobs))
    manifest.timing('generate', time.time() - start)
    if sum(len(ds) for ds in splits.values()) == 0:
        raise EmptyDatasetError("生成的数据集为空，检查仿真时长与窗口长度")

    trace_dir = os.path.join(out_dir, 'traces')
    os.makedirs(trace_dir, exist_ok=True)
    outputs = [save_track(track, os.path.join(out_dir, 'track.csv'))]
    for trace in traces:
        outputs.append(save_trace(trace, os.path.join(trace_dir, f"trace_{int(trace.meta['trace']):03d}.csv")))
    for name in SPLITS:
        outputs.append(save_dataset(splits[name], _split_path(out_dir, name)))
    table = stratum_table(splits, cfg.ratios)
    table_path = os.path.join(out_dir, 'strata.csv')
    table.to_csv(table_path, index=False)
    outputs.append(table_path)
    if not table['ok'].all():
        current_app.logger.warning(f"以下分层的划分比例偏离配置: {table[~table['ok']].to_dict('records')}")
    outputs.append(write_dataset_manifest(out_dir, splits, cfg.seed, cfg.noise_sigma, extra={
        'track_closed': bool(track.closed),
        'cells': [list(cell) for cell in cfg.cells()],
        'ratios': list(cfg.ratios),
    }))
    manifest.add_outputs(outputs, root=out_dir)
    manifest.write(out_dir)
    _echo_elapsed('数据生成', start)
    click.echo(f"train/val/test = {len(splits['train'])}/{len(splits['val'])}/{len(splits['test'])} -> {out_dir}")


# --- train ---

@pcmp_bp.cli.command('train')
@click.option('--data', 'data_dir', required=True, type=click.Path(exists=True, file_okay=False))
@click.option('--head', type=click.Choice(NET_HEADS), default='pcmp', show_default=True)
@click.option('--out', 'out_dir', default=None, type=click.Path(file_okay=False),
              help='输出目录，默认 runs/<head>')
@click.option('--preset', type=click.Choice(['default', 'long']), default='default', show_default=True,
              help='long 使用 TRAIN.long_epochs')
@click.option('--epochs', type=int, default=None)
@click.option('--lr', type=float, default=None)
@click.option('--seed', type=int, default=None)
@click.option('--curriculum/--no-curriculum', default=None, help='覆盖 CURRICULUM.enabled')
@click.option('--wheelbase', type=float, default=None, help='覆盖 DYNAMICS.wheelbase')
@click.option('--filter', 'filters', multiple=True, help='只用满足 key=value 的训练样本，可重复')
@click.option('--resume', type=click.Path(exists=True, dir_okay=False), default=None,
              help='从检查点继续训练')
@exit_codes
def train_command(data_dir, head, out_dir, preset, epochs, lr, seed, curriculum, wheelbase, filters, resume):
    """训练 PCMP 或 LSTM 预测头，输出检查点和逐轮日志。"""
    out_dir = out_dir or os.path.join('runs', head)
    train_set = _load_split(data_dir, 'train')
    val_set = _load_split(data_dir, 'val', required=False)
    conditions = parse_filters(filters)
    if conditions:
        train_set = train_set.filter(**conditions)
        val_set = val_set.filter(**conditions) if val_set is not None else None

    section = dict(current_app.config['TRAIN'])
    cfg = TrainConfig.from_dict(section, preset)
    overrides = {k: v for k, v in (('epochs', epochs), ('lr', lr), ('seed', seed)) if v is not None}
    cfg = replace(cfg, **overrides)

    model, start_epoch, optimizer_state, history = None, 0, None, None
    if resume:
        model, meta, optimizer_state, _ = _load_model(resume)
        if model.head != head:
            raise DataError(f"检查点的预测头是 {model.head}，与 --head {head} 不一致")
        wheelbase = meta.get('wheelbase') if wheelbase is None else wheelbase
        start_epoch = int(meta.get('epochs_done', 0))
        log_path = os.path.join(os.path.dirname(os.path.abspath(resume)), EPOCH_LOG_NAME)
        if os.path.exists(log_path):
            history = pd.read_csv(log_path, float_precision='round_trip')
            history = history[history['epoch'] < start_epoch]
        net = model.net
    else:
        net = replace(NetworkConfig.from_dict(current_app.config['NETWORK']), obs_len=train_set.obs_len,
                      horizon=train_set.horizon, context_size=train_set.context.shape[1])
    dyn = _dynamics(wheelbase)

    curriculum_section = dict(current_app.config['CURRICULUM'])
    if curriculum is not None:
        curriculum_section['enabled'] = curriculum
    schedule = CurriculumSchedule.from_dict(curriculum_section, net.horizon)
    schedule = schedule if schedule.enabled else None

    manifest = RunManifest('train', {**_snapshot('TRAIN', 'NETWORK', 'DYNAMICS'), 'CURRICULUM': curriculum_section,
                                     'head': head, 'preset': preset, 'epochs': cfg.epochs, 'filters': conditions},
                           seed=cfg.seed)
    manifest.add_input(_split_path(data_dir, 'train'))
    os.makedirs(out_dir, exist_ok=True)
    checkpoint_path = os.path.join(out_dir, CHECKPOINT_NAME)
    log_path = os.path.join(out_dir, EPOCH_LOG_NAME)
    footprint = Footprint.from_dict(current_app.config['METRICS'])

    def meta_for(epochs_done):
        return {'epochs_done': epochs_done, 'wheelbase': dyn.bicycle.wheelbase, 'seed': cfg.seed,
                'curriculum': schedule is not None}

    def on_epoch(epoch, current, optimizer, log):
        log.to_csv(log_path, index=False)
        if cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            current.save(checkpoint_path, meta_for(epoch + 1), optimizer)

    current_app.logger.info(f"开始训练 {head}: {len(train_set)} 个样本, {cfg.epochs} 轮, 从第 {start_epoch} 轮开始")
    start = time.time()
    try:
        result = train(train_set, head, cfg, dyn, net=net, schedule=schedule, val=val_set, footprint=footprint,
                       model=model, start_epoch=start_epoch, optimizer_state=optimizer_state, history=history,
                       on_epoch=on_epoch)
    except DivergenceError as e:
        if e.last_good is not None:
            path = e.last_good.save(os.path.join(out_dir, 'last_good.json'), meta_for(e.epoch))
            current_app.logger.error(f"训练发散，最后一次有效参数已保存到 {path}")
        raise
    manifest.timing('train', time.time() - start)
    result.model.save(checkpoint_path, meta_for(result.epochs_done), result.optimizer_state)
    result.history.to_csv(log_path, index=False, columns=LOG_COLUMNS)
    manifest.add_outputs([checkpoint_path, log_path], root=out_dir)
    manifest.write(out_dir)
    _echo_elapsed(f'{head} 训练', start)
    last = result.history.iloc[-1] if len(result.history) else None
    summary = '' if last is None else f", 最终 loss={last['train_loss']:.6f}"
    click.echo(f"{head} 训练完成 ({result.epochs_done} 轮{summary}) -> {checkpoint_path}")


# --- calibrate ---

def _scores(kind, model, dataset, dyn, track, jobs):
    states, _ = predict_batch(model.head, dataset.obs, dataset.context, dyn, model, jobs=jobs)
    return compute_scores(kind, states, dataset.target, dataset.last_state, track)


@pcmp_bp.cli.command('calibrate')
@click.option('--data', 'data_dir', required=True, type=click.Path(exists=True, file_okay=False))
@click.option('--checkpoint', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--region', 'region_kind', type=click.Choice([*KINDS, 'all']), default=None,
              help='默认取 CONFORMAL.region；all 表示三种区域')
@click.option('--delta', type=float, default=None, help='总失效概率，默认 CONFORMAL.delta')
@click.option('--mode', type=click.Choice(MODES), default=None, help='默认 CONFORMAL.mode')
@click.option('--out', 'out_dir', default='regions', show_default=True, type=click.Path(file_okay=False))
@click.option('--jobs', type=int, default=None)
@exit_codes
def calibrate_command(data_dir, checkpoint, region_kind, delta, mode, out_dir, jobs):
    """用验证集做 CQR 校准，输出预测区域文件。"""
    section = current_app.config['CONFORMAL']
    region_kind = region_kind or section['region']
    delta = float(section['delta'] if delta is None else delta)
    mode = mode or section['mode']
    kinds = KINDS if region_kind == 'all' else (region_kind,)
    model, _, _, dyn = _load_model(checkpoint)
    train_set = _load_split(data_dir, 'train')
    val_set = _load_split(data_dir, 'val')
    track = _load_data_track(data_dir) if 'frenet' in kinds else None
    jobs = _jobs(jobs)

    manifest = RunManifest('calibrate', {'CONFORMAL': {'region': region_kind, 'delta': delta, 'mode': mode},
                                         'DYNAMICS': current_app.config['DYNAMICS']})
    manifest.add_input(checkpoint)
    manifest.add_input(_split_path(data_dir, 'val'))
    os.makedirs(out_dir, exist_ok=True)
    start = time.time()
    for kind in kinds:
        train_scores = _scores(kind, model, train_set, dyn, track, jobs) if kind != 'circle' else None
        val_scores = _scores(kind, model, val_set, dyn, track, jobs)
        region = calibrate(kind, train_scores, val_scores, delta, mode)
        path = save_region(region, os.path.join(out_dir, f'region_{kind}_{mode}.json'))
        manifest.add_output(path, root=out_dir)
        click.echo(f"{kind} 区域 (δ={delta}, {mode}, M={region.n_calibration}) -> {path}")
    manifest.timing('calibrate', time.time() - start)
    manifest.write(out_dir)


# --- eval ---

def _unique_name(name, taken):
    if name not in taken:
        return name
    k = 2
    while f'{name}_{k}' in taken:
        k += 1
    return f'{name}_{k}'


@pcmp_bp.cli.command('eval')
@click.option('--data', 'data_dir', required=True, type=click.Path(exists=True, file_okay=False))
@click.option('--checkpoint', 'checkpoints', multiple=True, type=click.Path(exists=True, dir_okay=False),
              help='网络检查点，可重复；CTRV 基线总是参与评估')
@click.option('--region', 'regions', multiple=True, type=click.Path(exists=True, dir_okay=False),
              help='预测区域文件，可重复；覆盖率按第一个检查点的预测计算')
@click.option('--filter', 'filters', multiple=True, help='只评估满足 key=value 的测试样本，可重复')
@click.option('--out', 'out_dir', default='eval', show_default=True, type=click.Path(file_okay=False))
@click.option('--plots/--no-plots', default=True, show_default=True)
@click.option('--samples', type=int, default=1, show_default=True, help='画轨迹图的样本数')
@click.option('--jobs', type=int, default=None)
@exit_codes
def eval_command(data_dir, checkpoints, regions, filters, out_dir, plots, samples, jobs):
    """在测试集上计算 ADE/FDE/IoU、可行率和区域覆盖率，可选输出 SVG 图。"""
    test = _load_split(data_dir, 'test')
    conditions = parse_filters(filters)
    if conditions:
        test = test.filter(**conditions)
    if len(test) == 0:
        raise EmptyDatasetError(f"筛选后的测试集为空: {conditions}")
    footprint = Footprint.from_dict(current_app.config['METRICS'])
    jobs = _jobs(jobs)
    manifest = RunManifest('eval', {**_snapshot('DYNAMICS', 'METRICS'), 'filters': conditions})
    manifest.add_input(_split_path(data_dir, 'test'))
    os.makedirs(out_dir, exist_ok=True)
    start = time.time()

    predictions, reports, rows, loss_logs = {}, {}, [], {}
    for path in checkpoints:
        model, _, _, dyn = _load_model(path)
        name = _unique_name(model.head, predictions)
        states, _ = predict_batch(model.head, test.obs, test.context, dyn, model, jobs=jobs)
        predictions[name] = (states, dyn)
        manifest.add_input(path)
        log_path = os.path.join(os.path.dirname(os.path.abspath(path)), EPOCH_LOG_NAME)
        if os.path.exists(log_path):
            loss_logs[name] = pd.read_csv(log_path, float_precision='round_trip')
    dyn = _dynamics()
    states, _ = predict_batch('ctrv', test.obs, test.context, dyn, horizon=test.horizon)
    predictions[_unique_name('ctrv', predictions)] = (states, dyn)

    for name, (states, dyn) in predictions.items():
        reports[name] = evaluate(states, test.target, footprint, test.strata)
        rate, _ = feasibility_rate(states, test.last_state, dyn.model, dyn.integrator, dyn.bounds, dyn.tol_feas)
        rows.append({'head': name, **reports[name].summary(), 'feasibility': rate})
    outputs = save_reports(reports, out_dir, 'metrics')
    summary = pd.DataFrame(rows, columns=['head', 'ade', 'fde', 'iou', 'count', 'feasibility'])
    summary_path = os.path.join(out_dir, 'summary.csv')
    summary.to_csv(summary_path, index=False)
    outputs.append(summary_path)

    loaded = [load_region(path) for path in regions]
    if loaded:
        if not checkpoints:
            raise DataError("覆盖率评估需要至少一个网络检查点")
        first = next(iter(predictions))
        pred, _ = predictions[first]
        track = _load_data_track(data_dir) if any(r.kind == 'frenet' for r in loaded) else None
        by_key = {}
        for path, region in zip(regions, loaded):
            key = (region.kind, region.mode)
            if key in by_key:
                raise DataError(f"重复的区域文件 {path}: 已有 {region.kind}/{region.mode} 区域")
            by_key[key] = region
        scores = {kind: compute_scores(kind, pred, test.target, test.last_state, track)
                  for kind in {kind for kind, _ in by_key}}
        table = coverage_report(by_key, scores)
        coverage_path = os.path.join(out_dir, 'coverage.csv')
        table.to_csv(coverage_path, index=False)
        outputs.append(coverage_path)
        click.echo(table.to_string(index=False))

    if plots:
        outputs.extend(_eval_plots(out_dir, test, predictions, loaded, data_dir, samples, loss_logs))
    manifest.timing('eval', time.time() - start)
    manifest.add_outputs(outputs, root=out_dir)
    manifest.write(out_dir)
    _echo_elapsed('评估', start)
    click.echo(summary.to_string(index=False))


def _eval_plots(out_dir, test, predictions, regions, data_dir, samples, loss_logs):
    paths = []
    for i in range(min(max(samples, 0), len(test))):
        preds = {name: states[i] for name, (states, _) in predictions.items()}
        paths.append(plot_trajectories(os.path.join(out_dir, f'trajectories_{i}.svg'), test.obs[i],
                                       test.target[i], preds, title=f'sample {i}'))
    if regions:
        pred = next(iter(predictions.values()))[0][0]
        track = _load_data_track(data_dir) if any(r.kind == 'frenet' for r in regions) else None
        for region in regions:
            reference = track if region.kind == 'frenet' else LocalFrame.from_state(test.last_state[0])
            polygons = region_polygons(region, pred, reference)
            path = os.path.join(out_dir, f'regions_{region.kind}_{region.mode}.svg')
            paths.append(plot_regions(path, polygons, pred, test.target[0], obs=test.obs[0],
                                      title=f'{region.kind} {region.mode}'))
    if loss_logs:
        paths.append(plot_loss_curves(os.path.join(out_dir, 'loss_curves.svg'), loss_logs))
    return paths


# --- sweep-wheelbase ---

def parse_wheelbases(text):
    if not text:
        return list(WHEELBASE_GRID)
    try:
        values = [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise DataError(f"轴距列表必须是逗号分隔的数字，当前 '{text}'")
    if not values or min(values) <= 0:
        raise DataError(f"轴距必须为正，当前 {values}")
    return values


@pcmp_bp.cli.command('sweep-wheelbase')
@click.option('--data', 'data_dir', required=True, type=click.Path(exists=True, file_okay=False))
@click.option('--wheelbases', default=None, help='逗号分隔的轴距列表，默认 0.0802…1.5002，步长 0.01')
@click.option('--epochs', type=int, default=None, help='每个轴距的训练轮数，默认 TRAIN.epochs')
@click.option('--out', 'out_dir', default='sweep', show_default=True, type=click.Path(file_okay=False))
@click.option('--jobs', type=int, default=None)
@exit_codes
def sweep_wheelbase(data_dir, wheelbases, epochs, out_dir, jobs):
    """对每个轴距训练一个 PCMP 模型，输出各轴距的指标和皮尔逊相关系数。"""
    values = parse_wheelbases(wheelbases)
    train_set = _load_split(data_dir, 'train')
    test = _load_split(data_dir, 'test')
    cfg = TrainConfig.from_dict(current_app.config['TRAIN'])
    if epochs is not None:
        cfg = replace(cfg, epochs=epochs)
    net = replace(NetworkConfig.from_dict(current_app.config['NETWORK']), obs_len=train_set.obs_len,
                  horizon=train_set.horizon, context_size=train_set.context.shape[1])
    footprint = Footprint.from_dict(current_app.config['METRICS'])
    true_wheelbase = float(current_app.config['DYNAMICS']['wheelbase'])
    jobs = _jobs(jobs)
    manifest = RunManifest('sweep-wheelbase', {**_snapshot('TRAIN', 'NETWORK', 'DYNAMICS'), 'epochs': cfg.epochs,
                                               'wheelbases': values}, seed=cfg.seed)
    manifest.add_input(_split_path(data_dir, 'train'))
    manifest.add_input(_split_path(data_dir, 'test'))
    os.makedirs(out_dir, exist_ok=True)
    start = time.time()

    rows = []
    for wheelbase in values:
        dyn = _dynamics(wheelbase)
        result = train(train_set, 'pcmp', cfg, dyn, net=net)
        states, _ = predict_batch('pcmp', test.obs, test.context, dyn, result.model, jobs=jobs)
        report = evaluate(states, test.target, footprint)
        rows.append({'wheelbase': wheelbase, 'true': bool(abs(wheelbase - true_wheelbase) < 1e-9),
                     'train_loss': float(result.history['train_loss'].iloc[-1]),
                     'ade': report.ade, 'fde': report.fde, 'iou': report.iou})
        current_app.logger.info(f"L={wheelbase:.4f}: ADE={report.ade:.4f} IoU={report.iou:.4f}")
    table = pd.DataFrame(rows, columns=['wheelbase', 'true', 'train_loss', 'ade', 'fde', 'iou'])
    correlation = {}
    if len(table) >= 2:
        correlation = {metric: pearson(table['wheelbase'], table[metric])
                       for metric in ('ade', 'fde', 'iou', 'train_loss')}
    table_path = os.path.join(out_dir, 'sweep.csv')
    table.to_csv(table_path, index=False)
    corr_path = os.path.join(out_dir, 'correlation.json')
    with open(corr_path, 'w', encoding='utf-8') as f:
        json.dump({'pearson_r': correlation, 'true_wheelbase': true_wheelbase}, f, indent=2, sort_keys=True)
    manifest.timing('sweep', time.time() - start)
    manifest.add_outputs([table_path, corr_path], root=out_dir)
    manifest.write(out_dir)
    _echo_elapsed('轴距扫描', start)
    click.echo(table.to_string(index=False))
    for metric, r in correlation.items():
        click.echo(f"R(wheelbase, {metric}) = {r:.4f}")


# --- predict ---

@pcmp_bp.cli.command('predict')
@click.option('--input', 'input_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='观测窗口 CSV，列格式与数据集相同')
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), default=None,
              help='网络检查点；不给时使用 CTRV 基线')
@click.option('--horizon', type=int, default=None, help='CTRV 预测步数，默认 NETWORK.horizon')
@click.option('--out', 'out_path', default='predictions.csv', show_default=True, type=click.Path(dir_okay=False))
@click.option('--intent/--no-intent', default=False, help='PCMP 预测时额外输出控制意图描述')
@click.option('--jobs', type=int, default=None)
@exit_codes
def predict_command(input_path, checkpoint, horizon, out_path, intent, jobs):
    """批量预测，输出每个样本每一步的状态（PCMP 附带控制量）。"""
    obs, context = load_windows(input_path)
    if checkpoint:
        model, _, _, dyn = _load_model(checkpoint)
        head = model.head
    else:
        model, dyn, head = None, _dynamics(), 'ctrv'
    n = horizon or (model.net.horizon if model else int(current_app.config['NETWORK']['horizon']))
    states, controls = predict_batch(head, obs, context, dyn, model, horizon=n, jobs=_jobs(jobs))
    directory = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(directory, exist_ok=True)
    manifest = RunManifest('predict', {'head': head, 'horizon': int(states.shape[1])})
    manifest.add_input(input_path)
    if checkpoint:
        manifest.add_input(checkpoint)
    outputs = [write_predictions(out_path, states, controls)]
    if intent and controls is not None:
        labels = pd.DataFrame([describe_intent(c) for c in controls], columns=['turn', 'speed'])
        labels.insert(0, 'sample', np.arange(len(labels)))
        intent_path = os.path.splitext(out_path)[0] + '_intent.csv'
        labels.to_csv(intent_path, index=False)
        outputs.append(intent_path)
    manifest.add_outputs(outputs, root=directory)
    manifest.write(directory)
    click.echo(f"{head}: {states.shape[0]} 个样本 × {states.shape[1]} 步 -> {out_path}")

