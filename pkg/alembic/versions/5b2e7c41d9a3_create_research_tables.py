"""Create research run tables

Revision ID: 5b2e7c41d9a3
Revises: 
Create Date: 2026-10-18 05:40:12.318224

"""
from typing import Sequence, Union

from alembic import op
import sqlalchemy as sa


# revision identifiers, used by Alembic.
revision: str = '5b2e7c41d9a3'
down_revision: Union[str, None] = None
branch_labels: Union[str, Sequence[str], None] = None
depends_on: Union[str, Sequence[str], None] = None


def upgrade() -> None:
    """Upgrade schema."""
    op.create_table(
        'research_runs',
        sa.Column('id', sa.Integer(), nullable=False),
        sa.Column('command', sa.String(), nullable=True),
        sa.Column('status', sa.String(), nullable=True),
        sa.Column('config', sa.JSON(), nullable=True),
        sa.Column('summary', sa.JSON(), nullable=True),
        sa.Column('error', sa.Text(), nullable=True),
        sa.Column('exit_code', sa.Integer(), nullable=True),
        sa.Column('created_at', sa.DateTime(), nullable=True),
        sa.Column('updated_at', sa.DateTime(), nullable=True),
        sa.PrimaryKeyConstraint('id'),
    )
    op.create_index(op.f('ix_research_runs_id'), 'research_runs', ['id'], unique=False)
    op.create_index(op.f('ix_research_runs_command'), 'research_runs', ['command'], unique=False)

    op.create_table(
        'window_records',
        sa.Column('id', sa.Integer(), nullable=False),
        sa.Column('run_id', sa.Integer(), nullable=True),
        sa.Column('index', sa.Integer(), nullable=True),
        sa.Column('train_start', sa.String(), nullable=True),
        sa.Column('train_end', sa.String(), nullable=True),
        sa.Column('test_end', sa.String(), nullable=True),
        sa.Column('status', sa.String(), nullable=True),
        sa.Column('tickers', sa.JSON(), nullable=True),
        sa.Column('delta_hat', sa.JSON(), nullable=True),
        sa.Column('diagnostics', sa.JSON(), nullable=True),
        sa.ForeignKeyConstraint(['run_id'], ['research_runs.id']),
        sa.PrimaryKeyConstraint('id'),
    )
    op.create_index(op.f('ix_window_records_id'), 'window_records', ['id'], unique=False)
    op.create_index(op.f('ix_window_records_run_id'), 'window_records', ['run_id'], unique=False)


def downgrade() -> None:
    """Downgrade schema."""
    op.drop_index(op.f('ix_window_records_run_id'), table_name='window_records')
    op.drop_index(op.f('ix_window_records_id'), table_name='window_records')
    op.drop_table('window_records')
    op.drop_index(op.f('ix_research_runs_command'), table_name='research_runs')
    op.drop_index(op.f('ix_research_runs_id'), table_name='research_runs')
    op.drop_table('research_runs')
