import logging
import os

import numpy as np
import pandas as pd
import plotly.express as px

from app.util.synthgen import EventClass
from app.util.util import ensure_dir

logger = logging.getLogger(__name__)

CLASS_NAMES = [c.slug for c in EventClass]


def save_figure(fig, path: str, div_id: str = 'report') -> str:
    """Standalone HTML with a fixed div id, so reruns write identical files."""
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    fig.write_html(path, include_plotlyjs='cdn', div_id=div_id, full_html=True)
    logger.info("figure written to %s", path)
    return path


def plot_confusion_matrix(cm: np.ndarray, title: str = 'Confusion matrix'):
    """
    Heatmap of a 3 x 3 confusion matrix, rows true and columns predicted.

    Args:
        cm (np.ndarray): Integer counts.
        title (str): Figure title.
    """
    fig = px.imshow(
        np.asarray(cm),
        x=CLASS_NAMES,
        y=CLASS_NAMES,
        text_auto=True,
        color_continuous_scale='Blues',
        labels={'x': 'Predicted', 'y': 'True', 'color': 'Segments'},
        title=title,
    )
    fig.update_xaxes(side='bottom')
    return fig


def plot_loss_curves(history: pd.DataFrame, title: str = 'Training history'):
    """
    Train and validation loss per epoch, with the kept epoch marked.

    Args:
        history (pd.DataFrame): Columns epoch, train_loss, val_loss, is_best.
        title (str): Figure title.
    """
    df_plot = history.melt(id_vars=['epoch'], value_vars=['train_loss', 'val_loss'], var_name='Split',
                           value_name='Loss')
    fig = px.line(df_plot, x='epoch', y='Loss', color='Split', markers=True, title=title,
                  labels={'epoch': 'Epoch'})
    if not history.empty:
        best = history.loc[history['val_loss'].idxmin()]
        fig.add_vline(x=int(best['epoch']), line_dash='dash', annotation_text='kept')
    fig.update_layout(hovermode="x unified")
    return fig


def plot_robustness_curve(table: pd.DataFrame, title: str = 'Balanced accuracy under noise'):
    """
    Clean-trained against augmented-trained balanced accuracy per SNR level.

    Args:
        table (pd.DataFrame): Columns snr_db, clean_trained, augmented_trained.
        title (str): Figure title.
    """
    df_plot = table.copy()
    df_plot['SNR'] = [('clean' if np.isinf(v) else f"{v:g} dB") for v in df_plot['snr_db']]
    df_plot = df_plot.melt(id_vars=['SNR'], value_vars=['clean_trained', 'augmented_trained'], var_name='Training',
                           value_name='Balanced accuracy')
    fig = px.line(df_plot, x='SNR', y='Balanced accuracy', color='Training', markers=True, title=title)
    fig.update_yaxes(range=[0, 1])
    return fig


def plot_model_size(table: pd.DataFrame, title: str = 'Accuracy against compute'):
    """Balanced accuracy per width scale, positioned by MACs."""
    df_plot = table.melt(id_vars=['scale', 'params', 'macs'],
                         value_vars=['clean_balanced_accuracy', 'noisy_balanced_accuracy'],
                         var_name='Test set', value_name='Balanced accuracy')
    fig = px.line(df_plot, x='macs', y='Balanced accuracy', color='Test set', markers=True, title=title,
                  hover_data={'scale': True, 'params': ':,'}, labels={'macs': 'MACs per inference'})
    fig.update_xaxes(type='log')
    return fig


def plot_grid_bars(table: pd.DataFrame, arm_column: str, title: str):
    """Clean and noisy balanced accuracy per arm (feature set or broadcast axis)."""
    df_plot = table.melt(id_vars=[arm_column], value_vars=['clean_balanced_accuracy', 'noisy_balanced_accuracy'],
                         var_name='Test set', value_name='Balanced accuracy')
    fig = px.bar(df_plot, x=arm_column, y='Balanced accuracy', color='Test set', barmode='group', title=title)
    fig.update_yaxes(range=[0, 1])
    return fig


def plot_snr_distribution(table: pd.DataFrame, title: str = 'Observed SNR per participant'):
    if table.empty:
        return px.box(pd.DataFrame({'participant': [], 'snr_db': []}), x='participant', y='snr_db', title=title)
    return px.box(table, x='participant', y='snr_db', color='label', title=title,
                  labels={'snr_db': 'SNR (dB)', 'participant': 'Participant'})
